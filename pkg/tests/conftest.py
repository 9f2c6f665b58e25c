import csv

import numpy as np
import pytest

from ciclekit.corpus import IncidentRecord, LabeledDataset

THEMES = {
    "biological": [
        "salmonella detected in raw chicken",
        "listeria monocytogenes in soft cheese",
        "e coli found in ground beef",
        "norovirus traces in frozen berries",
    ],
    "allergens": [
        "undeclared peanuts in cookie mix",
        "milk not declared on chocolate bar",
        "hidden egg protein in pasta",
        "undeclared soy in protein powder",
    ],
    "foreign bodies": [
        "metal fragments found in canned soup",
        "glass pieces in pasta sauce jar",
        "plastic bits in chicken nuggets",
        "wood splinters in cereal",
    ],
    "chemical": [
        "excess sulphites in dried apricots",
        "dioxin contamination in pork",
        "pesticide residue on imported grapes",
        "histamine in canned tuna",
    ],
}

PRODUCTS = [
    "chicken", "cheese", "beef", "berries", "cookies", "chocolate", "pasta",
    "powder", "soup", "sauce", "nuggets", "cereal", "apricots", "pork",
    "grapes", "tuna",
]


def build_records(copies: int = 5, seed: int = 7) -> list[IncidentRecord]:
    rows = []
    i = 0
    for category, titles in THEMES.items():
        for title in titles:
            for batch in range(copies):
                rows.append(
                    IncidentRecord(
                        title=f"{title} lot {batch}",
                        hazard=f"{title.split()[0]}",
                        hazard_category=category,
                        product=PRODUCTS[i % len(PRODUCTS)],
                        product_category="prepared foods" if i % 2 else "fresh foods",
                        year=2020 + (i % 4),
                        language="en",
                        country="us",
                    )
                )
                i += 1
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(rows))
    return [rows[j] for j in order]


@pytest.fixture(scope="session")
def corpus() -> LabeledDataset:
    return LabeledDataset(build_records())


@pytest.fixture()
def mini_csv(tmp_path):
    path = tmp_path / "mini.csv"
    records = build_records(copies=5)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["title", "hazard", "hazard-category", "product", "product-category",
             "year", "month", "day", "language", "country", "hazard-title", "product-title"]
        )
        for r in records:
            writer.writerow(
                [r.title, r.hazard, r.hazard_category, r.product, r.product_category,
                 r.year or "", "", "", r.language or "", r.country or "", "", ""]
            )
    return str(path)
