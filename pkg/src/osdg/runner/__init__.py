from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ExperimentConfig, SearchSpace, load_config
from .experiment import (RunManifest, TrainResult, build_generator, build_splits, evaluate,
                         evaluate_checkpoint, load_raw, train, validation_auroc)
from .report import report, summarize
from .search import SearchResult, random_search

__all__ = [
    "CheckpointError", "ExperimentConfig", "RunManifest", "SearchResult", "SearchSpace",
    "TrainResult", "build_generator", "build_splits", "evaluate", "evaluate_checkpoint",
    "load_checkpoint", "load_config", "load_raw", "random_search", "report", "save_checkpoint",
    "summarize", "train", "validation_auroc",
]
