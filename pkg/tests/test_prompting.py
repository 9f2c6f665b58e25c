import numpy as np
import pytest

from ciclekit.conformal import PredictionSet
from ciclekit.corpus import LabelSpace
from ciclekit.prompting import (
    DEFAULT_TASK_DESCRIPTIONS,
    HAZARD_TASK_DESCRIPTION,
    STRATEGIES,
    Bypass,
    FewShot,
    PromptBuilder,
    PromptSpec,
    render,
)
from ciclekit.vectorize import TextVectorizer

TRAIN_TEXTS = [
    "salmonella found in peanut butter",       # 0 bacteria
    "salmonella outbreak tied to eggs",        # 1 bacteria
    "glass fragments found in pasta sauce",    # 2 foreign-body
    "glass pieces in baby food jars",          # 3 foreign-body
    "undeclared peanut in chocolate bar",      # 4 allergen
    "undeclared milk found in dark chocolate", # 5 allergen
    "listeria found in soft cheese",           # 6 bacteria
]
TRAIN_LABELS = ["bacteria", "bacteria", "foreign-body", "foreign-body", "allergen", "allergen", "bacteria"]
DESCRIPTION = HAZARD_TASK_DESCRIPTION


@pytest.fixture(scope="module")
def builder_parts():
    vec = TextVectorizer(mode="tfidf").fit(TRAIN_TEXTS)
    space = LabelSpace.from_labels(TRAIN_LABELS)
    y = np.array([space.index(l) for l in TRAIN_LABELS])
    builder = PromptBuilder(
        train_texts=TRAIN_TEXTS,
        train_vectors=vec.transform(TRAIN_TEXTS),
        train_labels=y,
        label_space=space,
        task_description=DESCRIPTION,
        n_features=vec.n_features_,
        shots_per_class=2,
    )
    return builder, vec, space


def qv(vec, text):
    return vec.transform_one(text)


class TestRender:
    def test_exact_prompt_text(self):
        shots = [
            FewShot(text="glass in jars", label="foreign-body", similarity=0.9, train_index=3),
            FewShot(text="salmonella in eggs", label="bacteria", similarity=0.5, train_index=1),
        ]
        rendered = render("Classify the hazard:", shots, "metal shavings in flour")
        assert rendered == (
            "Classify the hazard:\n"
            '"glass in jars" => foreign-body\n'
            '"salmonella in eggs" => bacteria\n'
            '"metal shavings in flour" => '
        )

    def test_zero_shot_render_keeps_query_line(self):
        rendered = render("Desc:", [], "some query")
        assert rendered == 'Desc:\n"some query" => '
        assert rendered.endswith("=> ")

    def test_default_descriptions_cover_all_tasks(self):
        assert set(DEFAULT_TASK_DESCRIPTIONS) == {"hazard", "hazard-category", "product", "product-category"}
        assert DEFAULT_TASK_DESCRIPTIONS["hazard"].startswith("We are looking for food hazards")
        assert DEFAULT_TASK_DESCRIPTIONS["product-category"].startswith("We are looking for food products")
        assert STRATEGIES == ("all", "sim", "max", "cicle")


class TestAllStrategy:
    def test_every_class_contributes_up_to_two_shots(self, builder_parts):
        builder, vec, space = builder_parts
        spec = builder.build_all("salmonella detected in nut butter", qv(vec, "salmonella detected in nut butter"))
        assert spec.strategy == "all"
        per_class = {label: 0 for label in space.labels}
        for shot in spec.shots:
            per_class[shot.label] += 1
        assert all(v == 2 for v in per_class.values())
        assert spec.n_shots == 6
        assert spec.n_classes == 3

    def test_shots_sorted_by_similarity_globally(self, builder_parts):
        builder, vec, _ = builder_parts
        spec = builder.build_all("salmonella detected in nut butter", qv(vec, "salmonella detected in nut butter"))
        sims = [s.similarity for s in spec.shots]
        assert sims == sorted(sims, reverse=True)
        # the query mentions salmonella and butter, so shot 0 must lead
        assert spec.shots[0].train_index == 0

    def test_similarity_tie_breaks_by_train_index(self, builder_parts):
        builder, vec, _ = builder_parts
        # a query with no shared stems ties every similarity at zero
        spec = builder.build_all("zzz qqq", qv(vec, "zzz qqq"))
        assert [s.similarity for s in spec.shots] == [0.0] * 6
        assert [s.train_index for s in spec.shots] == [0, 1, 2, 3, 4, 5]

    def test_rendered_layout(self, builder_parts):
        builder, vec, _ = builder_parts
        query = "salmonella detected in nut butter"
        spec = builder.build_all(query, qv(vec, query))
        lines = spec.rendered.split("\n")
        assert lines[0] == DESCRIPTION
        assert len(lines) == 1 + spec.n_shots + 1
        for shot, line in zip(spec.shots, lines[1:-1]):
            assert line == f'"{shot.text}" => {shot.label}'
        assert lines[-1] == f'"{query}" => '
        assert spec.n_chars == len(spec.rendered)


class TestSimStrategy:
    def test_takes_k_most_similar_from_the_all_pool(self, builder_parts):
        builder, vec, _ = builder_parts
        query = "salmonella detected in nut butter"
        all_spec = builder.build_all(query, qv(vec, query))
        sim_spec = builder.build_sim(query, qv(vec, query), k=3)
        assert sim_spec.strategy == "sim"
        assert [s.train_index for s in sim_spec.shots] == [s.train_index for s in all_spec.shots[:3]]

    def test_k_larger_than_pool_returns_whole_pool(self, builder_parts):
        builder, vec, _ = builder_parts
        spec = builder.build_sim("salmonella", qv(vec, "salmonella"), k=50)
        assert spec.n_shots == 6

    def test_k_validated(self, builder_parts):
        builder, vec, _ = builder_parts
        with pytest.raises(ValueError):
            builder.build_sim("x", qv(vec, "x"), k=0)


class TestMaxStrategy:
    def test_class_blocks_follow_descending_probability(self, builder_parts):
        builder, vec, space = builder_parts
        # class order by probability: bacteria (0.5), foreign-body (0.3), allergen (0.2)
        p = np.zeros(3)
        p[space.index("bacteria")] = 0.5
        p[space.index("foreign-body")] = 0.3
        p[space.index("allergen")] = 0.2
        query = "salmonella detected in nut butter"
        spec = builder.build_max(query, qv(vec, query), p, k=3)
        assert spec.strategy == "max"
        labels_in_order = [s.label for s in spec.shots]
        assert labels_in_order == ["bacteria", "bacteria", "foreign-body", "foreign-body", "allergen", "allergen"]
        probs = [s.class_probability for s in spec.shots]
        assert probs == [0.5, 0.5, 0.3, 0.3, 0.2, 0.2]

    def test_within_block_shots_sorted_by_similarity(self, builder_parts):
        builder, vec, space = builder_parts
        p = np.zeros(3)
        p[space.index("bacteria")] = 1.0
        query = "salmonella detected in nut butter"
        spec = builder.build_max(query, qv(vec, query), p, k=1)
        assert spec.n_shots == 2
        assert spec.shots[0].similarity >= spec.shots[1].similarity
        assert all(s.label == "bacteria" for s in spec.shots)

    def test_k_limits_class_count(self, builder_parts):
        builder, vec, space = builder_parts
        p = np.array([0.2, 0.5, 0.3])
        spec = builder.build_max("x", qv(vec, "x"), p, k=2)
        top2 = {space.labels[i] for i in np.argsort(-p)[:2]}
        assert {s.label for s in spec.shots} == top2

    def test_probability_tie_breaks_by_class_index(self, builder_parts):
        builder, vec, space = builder_parts
        spec = builder.build_max("x", qv(vec, "x"), np.array([1 / 3, 1 / 3, 1 / 3]), k=3)
        block_labels = [s.label for s in spec.shots[::2]]
        assert block_labels == list(space.labels)

    def test_row_length_validated(self, builder_parts):
        builder, vec, _ = builder_parts
        with pytest.raises(ValueError, match="label space"):
            builder.build_max("x", qv(vec, "x"), np.array([0.5, 0.5]), k=1)
        with pytest.raises(ValueError):
            builder.build_max("x", qv(vec, "x"), np.array([0.5, 0.3, 0.2]), k=0)


class TestCicleStrategy:
    def test_singleton_set_bypasses_the_model(self, builder_parts):
        builder, vec, space = builder_parts
        ps = PredictionSet(classes=(space.index("allergen"),), probabilities=(0.97,))
        outcome = builder.build_cicle("undeclared nuts", qv(vec, "undeclared nuts"), ps)
        assert isinstance(outcome, Bypass)
        assert outcome.label == "allergen"
        assert outcome.class_index == space.index("allergen")
        assert outcome.probability == 0.97

    def test_multi_class_set_builds_blocks_in_set_order(self, builder_parts):
        builder, vec, space = builder_parts
        classes = (space.index("foreign-body"), space.index("bacteria"))
        ps = PredictionSet(classes=classes, probabilities=(0.55, 0.40))
        query = "glass found in jars"
        outcome = builder.build_cicle(query, qv(vec, query), ps)
        assert isinstance(outcome, PromptSpec)
        assert outcome.strategy == "cicle"
        assert [s.label for s in outcome.shots] == ["foreign-body", "foreign-body", "bacteria", "bacteria"]
        assert [s.class_probability for s in outcome.shots] == [0.55, 0.55, 0.40, 0.40]
        assert outcome.n_classes == 2
        # absent classes never sneak into the prompt
        assert all(s.label != "allergen" for s in outcome.shots)

    def test_cicle_prompt_is_shorter_than_all(self, builder_parts):
        builder, vec, space = builder_parts
        query = "glass found in jars"
        ps = PredictionSet(
            classes=(space.index("foreign-body"), space.index("bacteria")),
            probabilities=(0.55, 0.40),
        )
        cicle = builder.build_cicle(query, qv(vec, query), ps)
        full = builder.build_all(query, qv(vec, query))
        assert cicle.n_chars < full.n_chars


class TestBuilderEdges:
    def test_class_with_single_example_contributes_one_shot(self):
        texts = ["salmonella in milk", "glass in jam"]
        labels = ["bacteria", "foreign-body"]
        vec = TextVectorizer(mode="tfidf").fit(texts)
        space = LabelSpace.from_labels(labels)
        builder = PromptBuilder(
            train_texts=texts,
            train_vectors=vec.transform(texts),
            train_labels=np.array([space.index(l) for l in labels]),
            label_space=space,
            task_description="Desc:",
            n_features=vec.n_features_,
        )
        spec = builder.build_all("salmonella alert", vec.transform_one("salmonella alert"))
        assert spec.n_shots == 2
        assert spec.n_classes == 2

    def test_shots_per_class_respected(self, builder_parts):
        _, vec, space = builder_parts
        builder = PromptBuilder(
            train_texts=TRAIN_TEXTS,
            train_vectors=vec.transform(TRAIN_TEXTS),
            train_labels=np.array([space.index(l) for l in TRAIN_LABELS]),
            label_space=space,
            task_description=DESCRIPTION,
            n_features=vec.n_features_,
            shots_per_class=1,
        )
        spec = builder.build_all("salmonella detected", vec.transform_one("salmonella detected"))
        assert spec.n_shots == 3
        assert spec.n_classes == 3

    def test_constructor_validation(self, builder_parts):
        _, vec, space = builder_parts
        vectors = vec.transform(TRAIN_TEXTS)
        y = np.array([space.index(l) for l in TRAIN_LABELS])
        with pytest.raises(ValueError, match="parallel"):
            PromptBuilder(TRAIN_TEXTS[:3], vectors, y, space, "d", vec.n_features_)
        with pytest.raises(ValueError, match="shots_per_class"):
            PromptBuilder(TRAIN_TEXTS, vectors, y, space, "d", vec.n_features_, shots_per_class=0)
