"""Conformal in-context learning toolkit for large label spaces.

Classical probabilistic classifiers plus split conformal prediction trim a
huge label space to a small calibrated candidate set per sample; the set
then drives a short few-shot prompt for a completion model, and samples
whose set is a singleton never reach the model at all.
"""

__version__ = "0.1.0"

from .classify import (
    CosineKNN,
    GridSearchReport,
    MajorityBaseline,
    RandomBaseline,
    default_grid,
    extract_spans,
    grid_search,
)
from .conformal import ConformalCalibrator, PredictionSet, empirical_coverage, quantile_rank
from .corpus import (
    IncidentRecord,
    LabelSpace,
    LabeledDataset,
    SplitPlan,
    filter_well_supported,
    load_csv,
    make_cv_splits,
    save_csv,
    support_tiers,
)
from .linear import LinearSVMOVR, LogisticRegressionOVR, TrainConfig, model_from_json, model_to_json
from .llm import (
    CompletionRequest,
    HttpCompletionClient,
    HttpPromptBackend,
    PerfectOracle,
    RandomShotOracle,
    ScriptedBackend,
    classify_with_llm,
    parse_label,
)
from .metrics import (
    ConfusionMatrix,
    aggregate_folds,
    cohen_kappa,
    f1_report,
    telemetry_report,
)
from .prompting import Bypass, FewShot, PromptBuilder, PromptSpec, render
from .stemming import PorterStemmer, porter_stem
from .tokenization import TokenSpan, tokenize
from .vectorize import FeatureVector, TextVectorizer, Vocabulary, cosine_similarity, to_csr

__all__ = [
    "Bypass",
    "CompletionRequest",
    "ConformalCalibrator",
    "ConfusionMatrix",
    "CosineKNN",
    "FeatureVector",
    "FewShot",
    "GridSearchReport",
    "HttpCompletionClient",
    "HttpPromptBackend",
    "IncidentRecord",
    "LabelSpace",
    "LabeledDataset",
    "LinearSVMOVR",
    "LogisticRegressionOVR",
    "MajorityBaseline",
    "PerfectOracle",
    "PorterStemmer",
    "PredictionSet",
    "PromptBuilder",
    "PromptSpec",
    "RandomBaseline",
    "RandomShotOracle",
    "ScriptedBackend",
    "SplitPlan",
    "TextVectorizer",
    "TokenSpan",
    "TrainConfig",
    "Vocabulary",
    "aggregate_folds",
    "classify_with_llm",
    "cohen_kappa",
    "cosine_similarity",
    "default_grid",
    "empirical_coverage",
    "extract_spans",
    "f1_report",
    "filter_well_supported",
    "grid_search",
    "load_csv",
    "make_cv_splits",
    "model_from_json",
    "model_to_json",
    "parse_label",
    "porter_stem",
    "quantile_rank",
    "render",
    "save_csv",
    "support_tiers",
    "telemetry_report",
    "to_csr",
    "tokenize",
]
