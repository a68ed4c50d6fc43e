"""Answer ranking with complex-valued word and n-gram states."""

from .model import (
    ModelConfig,
    ModelParams,
    RANK_MARGIN,
    VARIANTS,
    hinge_loss,
    match_score,
    pooled_features,
    score_pair,
    sentence_features,
)
from .training import FitResult, TrainConfig, fit, init_params, train_step
from .evaluation import EvalResult, evaluate
from .data import QACorpus, load_corpus
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "ModelParams",
    "RANK_MARGIN",
    "VARIANTS",
    "TrainConfig",
    "FitResult",
    "EvalResult",
    "QACorpus",
    "hinge_loss",
    "match_score",
    "pooled_features",
    "score_pair",
    "sentence_features",
    "fit",
    "init_params",
    "train_step",
    "evaluate",
    "load_corpus",
    "load_checkpoint",
    "save_checkpoint",
    "__version__",
]
