"""Run orchestration shared by the CLI subcommands.

A run directory collects everything one experiment produces: the manifest
with the effective configuration, the split plan, and per-fold artifacts
(vectorizer, model, calibration, transcripts, reports). Later stages load
earlier artifacts from the same directory, so a full pipeline is a chain
of subcommands pointed at one --out.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .classify import (
    CosineKNN,
    MajorityBaseline,
    RandomBaseline,
    default_grid,
    extract_spans,
    grid_search,
    mean_classes_per_informative_token,
)
from .conformal import ConformalCalibrator, empirical_coverage, mean_set_size
from .corpus import (
    LabeledDataset,
    SplitPlan,
    TASKS,
    filter_well_supported,
    load_csv,
    make_cv_splits,
    support_tiers,
)
from .linear import LinearSVMOVR, LogisticRegressionOVR, model_from_json, model_to_json
from .llm import (
    HttpCompletionClient,
    HttpPromptBackend,
    PerfectOracle,
    RandomShotOracle,
    ScriptedBackend,
    TranscriptWriter,
    classify_with_llm,
)
from .metrics import (
    ConfusionMatrix,
    FAILURE,
    aggregate_folds,
    f1_report,
    telemetry_report,
)
from .prompting import DEFAULT_TASK_DESCRIPTIONS, Bypass, PromptBuilder
from .vectorize import TextVectorizer

DEFAULTS = {
    "dataset": None,
    "out": None,
    "task": "hazard-category",
    "seed": 42,
    "folds": 5,
    "val_fraction": 0.1,
    "stratify": None,
    "vectorizer": "tfidf",
    "classifier": "lr",
    "grid": None,
    "metric": "macro_f1",
    "alpha": 0.05,
    "strategy": "cicle",
    "k": 10,
    "shots_per_class": 2,
    "task_description": None,
    "backend": "perfect",
    "model": None,
    "scripted_replies": None,
    "oracle_seed": 42,
    "max_tokens": 20,
    "min_train_support": 4,
    "min_test_support": 1,
    "jobs": 1,
}


class ConfigError(ValueError):
    """Bad or missing configuration values."""


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(obj) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return obj


def effective_config(file_config: dict, overrides: dict) -> dict:
    """Defaults, then file values, then explicit flags."""
    config = dict(DEFAULTS)
    config.update(file_config)
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    if config["task"] not in TASKS:
        raise ConfigError(f"unknown task {config['task']!r}")
    if config["stratify"] is None:
        config["stratify"] = config["task"].endswith("-category")
    if config["task_description"] is None:
        config["task_description"] = DEFAULT_TASK_DESCRIPTIONS[config["task"]]
    return config


def config_sha256(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()


def write_manifest(out: str, command: str, config: dict) -> None:
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "manifest.json")
    manifest = {"commands": [], "config": config, "config_sha256": config_sha256(config),
                "version": __version__}
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        manifest["config"] = config
        manifest["config_sha256"] = config_sha256(config)
    if command not in manifest["commands"]:
        manifest["commands"].append(command)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def _require(config: dict, *keys: str) -> None:
    for key in keys:
        if config.get(key) is None:
            raise ConfigError(f"config value {key!r} is required here")


def _fold_dir(out: str, fold: int) -> str:
    path = os.path.join(out, f"fold{fold}")
    os.makedirs(path, exist_ok=True)
    return path


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)


def _read_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def build_classifier(kind: str, seed: int):
    if kind == "lr":
        return LogisticRegressionOVR(seed=seed)
    if kind == "svm":
        return LinearSVMOVR(seed=seed)
    if kind == "knn":
        return CosineKNN()
    if kind == "majority":
        return MajorityBaseline()
    if kind == "random":
        return RandomBaseline(seed=seed)
    raise ConfigError(f"unknown classifier kind {kind!r}")


def save_model(model, path: str) -> None:
    if isinstance(model, (LogisticRegressionOVR, LinearSVMOVR)):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(model_to_json(model))
        return
    if isinstance(model, CosineKNN):
        obj = {
            "kind": "knn",
            "params": model.get_params(),
            "labels": model._y.tolist(),
            "n_classes": model.n_classes_,
            "n_features": model.n_features_,
            "train": {
                "data": model._train.data.tolist(),
                "indices": model._train.indices.tolist(),
                "indptr": model._train.indptr.tolist(),
            },
        }
    elif isinstance(model, MajorityBaseline):
        obj = {"kind": "majority", "params": {}, "majority": model.majority_,
               "n_classes": model.n_classes_}
    elif isinstance(model, RandomBaseline):
        obj = {"kind": "random", "params": model.get_params(), "n_classes": model.n_classes_}
    else:
        raise ConfigError(f"cannot serialize model type {type(model).__name__}")
    _write_json(path, obj)


def load_model(path: str):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    obj = json.loads(text)
    kind = obj["kind"]
    if kind in ("logistic", "svm"):
        return model_from_json(text)
    if kind == "knn":
        from scipy import sparse

        model = CosineKNN(**obj["params"])
        model._train = sparse.csr_matrix(
            (obj["train"]["data"], obj["train"]["indices"], obj["train"]["indptr"]),
            shape=(len(obj["train"]["indptr"]) - 1, obj["n_features"]),
        )
        model._y = np.asarray(obj["labels"], dtype=np.int64)
        model.n_classes_ = obj["n_classes"]
        model.n_features_ = obj["n_features"]
        return model
    if kind == "majority":
        model = MajorityBaseline()
        model.majority_ = int(obj["majority"])
        model.n_classes_ = int(obj["n_classes"])
        return model
    if kind == "random":
        model = RandomBaseline(**obj["params"])
        model.n_classes_ = int(obj["n_classes"])
        return model
    raise ConfigError(f"unknown serialized model kind {kind!r}")


def model_fingerprint(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def run_ingest(config: dict) -> dict:
    _require(config, "dataset")
    dataset = load_csv(config["dataset"])
    summary = {"n_records": len(dataset), "tasks": {}}
    for task in TASKS:
        space = dataset.label_space(task)
        try:
            tiers = support_tiers(dataset, task)
        except ValueError:
            tiers = None
        summary["tasks"][task] = {
            "n_classes": len(space),
            "tiers": None
            if tiers is None
            else {
                "high": {"n_classes": len(tiers.high), "support": tiers.high_support},
                "medium": {"n_classes": len(tiers.medium), "support": tiers.medium_support},
                "low": {"n_classes": len(tiers.low), "support": tiers.low_support},
            },
        }
    if config.get("out"):
        write_manifest(config["out"], "ingest", config)
        _write_json(os.path.join(config["out"], "summary.json"), summary)
    return summary


def run_split(config: dict) -> SplitPlan:
    _require(config, "dataset", "out")
    dataset = load_csv(config["dataset"])
    plan = make_cv_splits(
        dataset,
        k=config["folds"],
        val_fraction=config["val_fraction"],
        stratify_task=config["task"] if config["stratify"] else None,
        seed=config["seed"],
    )
    write_manifest(config["out"], "split", config)
    with open(os.path.join(config["out"], "splits.json"), "w", encoding="utf-8") as fh:
        fh.write(plan.to_json())
    return plan


def _load_plan(config: dict) -> SplitPlan:
    path = os.path.join(config["out"], "splits.json")
    if not os.path.exists(path):
        raise ConfigError(f"no split plan at {path}; run the split subcommand first")
    with open(path, encoding="utf-8") as fh:
        return SplitPlan.from_json(fh.read())


def _map_folds(jobs: int, worker, folds) -> list:
    if jobs <= 1:
        return [worker(i) for i in range(len(folds))]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, range(len(folds))))


def run_grid_search(config: dict) -> dict:
    """Per-fold hyperparameter selection on the validation block."""
    _require(config, "dataset", "out")
    dataset = load_csv(config["dataset"])
    plan = _load_plan(config)
    task = config["task"]
    space = dataset.label_space(task)
    y = dataset.y(task)
    titles = dataset.titles()
    grid = config["grid"] or default_grid(config["classifier"])

    def one_fold(i: int) -> dict:
        fold = plan.folds[i]
        vectorizer = TextVectorizer(mode=config["vectorizer"])
        X_train = vectorizer.fit_transform([titles[j] for j in fold.train])
        X_val = vectorizer.transform([titles[j] for j in fold.val])
        report, _ = grid_search(
            build_classifier(config["classifier"], config["seed"]),
            grid,
            X_train,
            y[fold.train],
            X_val,
            y[fold.val],
            n_classes=len(space),
            n_features=vectorizer.n_features_,
            metric=config["metric"],
        )
        with open(os.path.join(_fold_dir(config["out"], i), "grid.json"), "w",
                  encoding="utf-8") as fh:
            fh.write(report.to_json())
        return {"fold": i, "best_params": report.best_params, "best_score": report.best_score}

    results = _map_folds(config["jobs"], one_fold, plan.folds)
    write_manifest(config["out"], "grid-search", config)
    summary = {"metric": config["metric"], "folds": results}
    _write_json(os.path.join(config["out"], "grid_report.json"), summary)
    return summary


def run_train(config: dict) -> dict:
    """Grid-search, fit and evaluate one classifier per fold."""
    _require(config, "dataset", "out")
    dataset = load_csv(config["dataset"])
    plan = _load_plan(config)
    task = config["task"]
    space = dataset.label_space(task)
    y = dataset.y(task)
    titles = dataset.titles()
    grid = config["grid"] or default_grid(config["classifier"])
    supported = filter_well_supported(
        dataset, plan, task,
        min_train=config["min_train_support"], min_test=config["min_test_support"],
    )

    def one_fold(i: int) -> dict:
        fold = plan.folds[i]
        fold_dir = _fold_dir(config["out"], i)
        vectorizer = TextVectorizer(mode=config["vectorizer"])
        X_train = vectorizer.fit_transform([titles[j] for j in fold.train])
        X_val = vectorizer.transform([titles[j] for j in fold.val])
        report, fitted = grid_search(
            build_classifier(config["classifier"], config["seed"]),
            grid,
            X_train,
            y[fold.train],
            X_val,
            y[fold.val],
            n_classes=len(space),
            n_features=vectorizer.n_features_,
            metric=config["metric"],
        )
        model = fitted[report.best_index]
        with open(os.path.join(fold_dir, "grid.json"), "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
        with open(os.path.join(fold_dir, "vectorizer.json"), "w", encoding="utf-8") as fh:
            fh.write(vectorizer.to_json())
        save_model(model, os.path.join(fold_dir, "model.json"))

        X_test = vectorizer.transform([titles[j] for j in fold.test])
        predictions = model.predict(X_test)
        cm = ConfusionMatrix.build(y[fold.test], predictions, len(space))
        full = f1_report(cm)
        subset = f1_report(cm, supported[i]) if supported[i] else None
        fold_report = {
            "fold": i,
            "best_params": report.best_params,
            "val_score": report.best_score,
            "test": full.to_dict(),
            "test_well_supported": subset.to_dict() if subset else None,
        }
        _write_json(os.path.join(fold_dir, "test_report.json"), fold_report)
        return fold_report

    results = _map_folds(config["jobs"], one_fold, plan.folds)
    macro = aggregate_folds([r["test"]["macro_f1"] for r in results])
    summary = {
        "task": task,
        "classifier": config["classifier"],
        "vectorizer": config["vectorizer"],
        "macro_f1": {"mean": macro.mean, "max": macro.best, "deviation": macro.deviation},
        "folds": results,
    }
    sub_values = [r["test_well_supported"]["macro_f1"] for r in results
                  if r["test_well_supported"]]
    if sub_values:
        sub = aggregate_folds(sub_values)
        summary["macro_f1_well_supported"] = {
            "mean": sub.mean, "max": sub.best, "deviation": sub.deviation,
        }
    write_manifest(config["out"], "train", config)
    _write_json(os.path.join(config["out"], "train_report.json"), summary)
    return summary


def run_calibrate(config: dict) -> dict:
    """Fit a conformal calibrator per fold on the validation block."""
    _require(config, "dataset", "out")
    dataset = load_csv(config["dataset"])
    plan = _load_plan(config)
    task = config["task"]
    space = dataset.label_space(task)
    y = dataset.y(task)
    titles = dataset.titles()

    def one_fold(i: int) -> dict:
        fold = plan.folds[i]
        fold_dir = _fold_dir(config["out"], i)
        vectorizer = TextVectorizer.from_json(
            open(os.path.join(fold_dir, "vectorizer.json"), encoding="utf-8").read()
        )
        model_path = os.path.join(fold_dir, "model.json")
        model = load_model(model_path)
        if not hasattr(model, "predict_proba"):
            raise ConfigError(
                f"classifier {type(model).__name__} has no probabilities; "
                "calibration needs a probabilistic base model"
            )
        X_val = vectorizer.transform([titles[j] for j in fold.val])
        calibrator = ConformalCalibrator(alpha=config["alpha"])
        calibrator.fit(
            model.predict_proba(X_val), y[fold.val], fingerprint=model_fingerprint(model_path)
        )
        with open(os.path.join(fold_dir, "calibration.json"), "w", encoding="utf-8") as fh:
            fh.write(calibrator.to_json())
        X_test = vectorizer.transform([titles[j] for j in fold.test])
        proba = model.predict_proba(X_test)
        return {
            "fold": i,
            "q_hat": calibrator.q_hat_,
            "n_cal": calibrator.n_cal_,
            "coverage": empirical_coverage(calibrator, proba, y[fold.test]),
            "mean_set_size": mean_set_size(calibrator, proba),
        }

    results = _map_folds(config["jobs"], one_fold, plan.folds)
    coverage = aggregate_folds([r["coverage"] for r in results])
    summary = {
        "alpha": config["alpha"],
        "coverage": {"mean": coverage.mean, "max": coverage.best,
                     "deviation": coverage.deviation},
        "mean_set_size": float(np.mean([r["mean_set_size"] for r in results])),
        "folds": results,
    }
    write_manifest(config["out"], "calibrate", config)
    _write_json(os.path.join(config["out"], "calibration_report.json"), summary)
    return summary


def build_backend(config: dict):
    kind = config["backend"]
    if kind == "perfect":
        return PerfectOracle(seed=config["oracle_seed"])
    if kind == "random-shot":
        return RandomShotOracle(seed=config["oracle_seed"])
    if kind == "scripted":
        _require(config, "scripted_replies")
        return ScriptedBackend(_read_json(config["scripted_replies"]))
    if kind == "http":
        client = HttpCompletionClient()
        return HttpPromptBackend(client, model=config["model"],
                                 max_tokens=config["max_tokens"])
    raise ConfigError(f"unknown backend {kind!r}")


def run_prompt(config: dict) -> dict:
    """Build prompts for every test sample, complete them, score the run."""
    _require(config, "dataset", "out")
    strategy = config["strategy"]
    if strategy not in ("all", "sim", "max", "cicle"):
        raise ConfigError(f"unknown strategy {strategy!r}")
    dataset = load_csv(config["dataset"])
    plan = _load_plan(config)
    task = config["task"]
    space = dataset.label_space(task)
    y = dataset.y(task)
    titles = dataset.titles()
    backend = build_backend(config)

    def one_fold(i: int) -> dict:
        fold = plan.folds[i]
        fold_dir = _fold_dir(config["out"], i)
        vectorizer = TextVectorizer.from_json(
            open(os.path.join(fold_dir, "vectorizer.json"), encoding="utf-8").read()
        )
        train_texts = [titles[j] for j in fold.train]
        builder = PromptBuilder(
            train_texts,
            vectorizer.transform(train_texts),
            y[fold.train],
            space,
            config["task_description"],
            n_features=vectorizer.n_features_,
            shots_per_class=config["shots_per_class"],
        )
        model = None
        calibrator = None
        if strategy in ("max", "cicle"):
            model = load_model(os.path.join(fold_dir, "model.json"))
            if not hasattr(model, "predict_proba"):
                raise ConfigError("max and cicle strategies need a probabilistic base model")
        if strategy == "cicle":
            cal_path = os.path.join(fold_dir, "calibration.json")
            if not os.path.exists(cal_path):
                raise ConfigError(f"no calibration at {cal_path}; run calibrate first")
            calibrator = ConformalCalibrator.from_json(
                open(cal_path, encoding="utf-8").read()
            )

        X_test = vectorizer.transform([titles[j] for j in fold.test])
        proba = model.predict_proba(X_test) if model is not None else None
        telemetry_rows = []
        predictions = np.full(len(fold.test), FAILURE, dtype=np.int64)
        with TranscriptWriter(os.path.join(fold_dir, f"transcripts_{strategy}.jsonl")) as log:
            pred_rows = []
            for pos, j in enumerate(fold.test):
                query = titles[j]
                vec = X_test[pos]
                if strategy == "all":
                    outcome = builder.build_all(query, vec)
                elif strategy == "sim":
                    outcome = builder.build_sim(query, vec, config["k"])
                elif strategy == "max":
                    outcome = builder.build_max(query, vec, proba[pos], config["k"])
                else:
                    outcome = builder.build_cicle(
                        query, vec, calibrator.predict_set(proba[pos])
                    )
                true_label = space.labels[int(y[j])]
                if isinstance(outcome, Bypass):
                    prediction, telem = classify_with_llm(outcome, space, backend)
                    log.log_bypass(outcome)
                else:
                    prediction, telem = classify_with_llm(outcome, space, backend, true_label)
                    log.log_prompt(outcome, telem.raw_reply, prediction, retries=telem.retries)
                telemetry_rows.append(telem)
                if prediction is not None:
                    predictions[pos] = space.index(prediction)
                pred_rows.append(
                    {
                        "index": int(j),
                        "gold": true_label,
                        "prediction": prediction,
                        "bypassed": telem.bypassed,
                    }
                )
        with open(os.path.join(fold_dir, f"predictions_{strategy}.jsonl"), "w",
                  encoding="utf-8") as fh:
            for row in pred_rows:
                fh.write(json.dumps(row) + "\n")
        cm = ConfusionMatrix.build(y[fold.test], predictions, len(space))
        scores = f1_report(cm)
        telem_report = telemetry_report(telemetry_rows)
        fold_summary = {
            "fold": i,
            "scores": scores.to_dict(),
            "telemetry": telem_report.to_dict(),
        }
        _write_json(os.path.join(fold_dir, f"prompt_report_{strategy}.json"), fold_summary)
        return fold_summary

    results = _map_folds(config["jobs"], one_fold, plan.folds)
    macro = aggregate_folds([r["scores"]["macro_f1"] for r in results])
    summary = {
        "strategy": strategy,
        "backend": config["backend"],
        "macro_f1": {"mean": macro.mean, "max": macro.best, "deviation": macro.deviation},
        "llm_usage": float(np.mean([r["telemetry"]["llm_usage"] for r in results])),
        "mean_prompt_chars": float(
            np.mean([r["telemetry"]["mean_prompt_chars"] for r in results])
        ),
        "mean_classes_per_prompt": float(
            np.mean([r["telemetry"]["mean_classes_per_prompt"] for r in results])
        ),
        "failure_rate": float(np.mean([r["telemetry"]["failure_rate"] for r in results])),
        "folds": results,
    }
    write_manifest(config["out"], "prompt-run", config)
    _write_json(os.path.join(config["out"], f"prompt_summary_{strategy}.json"), summary)
    return summary


def run_spans(config: dict) -> dict:
    """Emit positive-weight token spans for each test record's gold class."""
    _require(config, "dataset", "out")
    dataset = load_csv(config["dataset"])
    plan = _load_plan(config)
    task = config["task"]
    space = dataset.label_space(task)
    y = dataset.y(task)
    titles = dataset.titles()

    def one_fold(i: int) -> dict:
        fold = plan.folds[i]
        fold_dir = _fold_dir(config["out"], i)
        vectorizer = TextVectorizer.from_json(
            open(os.path.join(fold_dir, "vectorizer.json"), encoding="utf-8").read()
        )
        model = load_model(os.path.join(fold_dir, "model.json"))
        if not isinstance(model, LogisticRegressionOVR):
            raise ConfigError("span extraction needs the logistic model's coefficients")
        with open(os.path.join(fold_dir, "spans.jsonl"), "w", encoding="utf-8") as fh:
            for j in fold.test:
                spans = extract_spans(model, vectorizer, titles[j], int(y[j]))
                fh.write(
                    json.dumps(
                        {
                            "index": int(j),
                            "title": titles[j],
                            "class": space.labels[int(y[j])],
                            "spans": [list(s) for s in spans],
                        }
                    )
                    + "\n"
                )
        return {"fold": i, "mean_classes_per_informative_token":
                mean_classes_per_informative_token(model)}

    results = _map_folds(config["jobs"], one_fold, plan.folds)
    summary = {
        "task": task,
        "mean_classes_per_informative_token": float(
            np.mean([r["mean_classes_per_informative_token"] for r in results])
        ),
        "folds": results,
    }
    write_manifest(config["out"], "spans", config)
    _write_json(os.path.join(config["out"], "spans_report.json"), summary)
    return summary


def run_eval(config: dict, predictions_path: str) -> dict:
    """Score a predictions JSONL (gold/prediction label strings) from scratch."""
    _require(config, "dataset")
    dataset = load_csv(config["dataset"])
    space = dataset.label_space(config["task"])
    gold = []
    predicted = []
    with open(predictions_path, encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            gold.append(space.index(row["gold"]))
            pred = row.get("prediction")
            predicted.append(FAILURE if pred is None else space.index(pred))
    cm = ConfusionMatrix.build(np.asarray(gold), np.asarray(predicted), len(space))
    report = f1_report(cm).to_dict()
    if config.get("out"):
        write_manifest(config["out"], "eval", config)
        _write_json(os.path.join(config["out"], "eval_report.json"), report)
    return report


def run_report(config: dict) -> str:
    """Human-readable summary of everything the run directory holds."""
    _require(config, "out")
    out = config["out"]
    lines = []
    train_path = os.path.join(out, "train_report.json")
    if os.path.exists(train_path):
        train = _read_json(train_path)
        agg = train["macro_f1"]
        lines.append(
            f"{train['vectorizer']}-{train['classifier']} on {train['task']}: "
            f"macro-F1 mean {agg['mean']:.3f} max {agg['max']:.3f} "
            f"dev {agg['deviation']:.3f}"
        )
        if "macro_f1_well_supported" in train:
            sub = train["macro_f1_well_supported"]
            lines.append(
                f"  well-supported subset: mean {sub['mean']:.3f} "
                f"max {sub['max']:.3f} dev {sub['deviation']:.3f}"
            )
    cal_path = os.path.join(out, "calibration_report.json")
    if os.path.exists(cal_path):
        cal = _read_json(cal_path)
        lines.append(
            f"conformal alpha={cal['alpha']}: coverage mean "
            f"{cal['coverage']['mean']:.3f}, mean set size {cal['mean_set_size']:.2f}"
        )
    for name in sorted(os.listdir(out)):
        if name.startswith("prompt_summary_") and name.endswith(".json"):
            ps = _read_json(os.path.join(out, name))
            lines.append(
                f"{ps['strategy']} ({ps['backend']}): macro-F1 mean "
                f"{ps['macro_f1']['mean']:.3f}, usage {ps['llm_usage'] * 100:.0f}%, "
                f"chars {ps['mean_prompt_chars']:.1f}, "
                f"classes/prompt {ps['mean_classes_per_prompt']:.2f}, "
                f"failures {ps['failure_rate'] * 100:.1f}%"
            )
    text = "\n".join(lines) if lines else "nothing to report yet"
    report_path = os.path.join(out, "report.txt")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    return text
