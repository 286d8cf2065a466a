"""Visually-aware recommenders with counterfactual removal of visual bias."""

from .causal import (ReferenceSet, debiased_score, natural_direct_effect, reference_values,
                     total_effect, total_indirect_effect)
from .core import ModelKind, ParamSet, TrainConfig, init_params
from .data import (Dataset, FeatureStore, RawInteractions, SplitDataset, SyntheticSpec,
                   generate_synthetic, kcore_filter, load_interactions, load_visual_features,
                   split_by_ground_truth, split_leave_one_out)
from .estimator import VisualRecommender
from .evaluation import EvalReport, evaluate, make_scorer
from .exceptions import (ConfigError, DataError, FormatError, ParseError, ProtocolError,
                         ShapeError, SparseDatasetError, TrainingError, VisDebiasError)
from .training import load_checkpoint, save_checkpoint, train

__all__ = [
    "ConfigError", "DataError", "Dataset", "EvalReport", "FeatureStore", "FormatError",
    "ModelKind", "ParamSet", "ParseError", "ProtocolError", "RawInteractions", "ReferenceSet",
    "ShapeError", "SparseDatasetError", "SplitDataset", "SyntheticSpec", "TrainConfig",
    "TrainingError", "VisDebiasError", "VisualRecommender", "debiased_score", "evaluate",
    "generate_synthetic", "init_params", "kcore_filter", "load_checkpoint", "load_interactions",
    "load_visual_features", "make_scorer", "natural_direct_effect", "reference_values",
    "save_checkpoint", "split_by_ground_truth", "split_leave_one_out", "total_effect",
    "total_indirect_effect", "train",
]

__version__ = "0.1.0"
