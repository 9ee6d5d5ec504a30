"""Pool-based active learning engine for extractive question answering."""

from .acquisition import (
    AcquisitionRequest,
    PALStarvedError,
    ScoredCandidate,
    select_clustering,
    select_diversity,
    select_least_confidence,
    select_pal,
)
from .backend import AnswerSpan, Backend, ModelHandle, SpanDistribution, decode_answer, tokenize
from .data import Dataset, QAInstance, oracle_label, parse_squad, subset_one_per_context
from .loop import ALConfig, ExperimentLog, PoolState, run_experiment, seed_pool
from .metrics import EvalResult, LearningCurve, auc, evaluate, exact_match, token_f1
from .synthetic import SyntheticBackend
from .wire import WireBackend

__version__ = "0.1.0"

__all__ = [
    "ALConfig",
    "AcquisitionRequest",
    "AnswerSpan",
    "Backend",
    "Dataset",
    "EvalResult",
    "ExperimentLog",
    "LearningCurve",
    "ModelHandle",
    "PALStarvedError",
    "PoolState",
    "QAInstance",
    "ScoredCandidate",
    "SpanDistribution",
    "SyntheticBackend",
    "WireBackend",
    "auc",
    "decode_answer",
    "evaluate",
    "exact_match",
    "oracle_label",
    "parse_squad",
    "run_experiment",
    "seed_pool",
    "select_clustering",
    "select_diversity",
    "select_least_confidence",
    "select_pal",
    "subset_one_per_context",
    "token_f1",
    "tokenize",
]
