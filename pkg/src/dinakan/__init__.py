"""Hybrid neighborhood-attention / Kolmogorov-Arnold image classifier.

A self-contained numpy implementation: dense tensors with reverse-mode
differentiation, dilated neighborhood attention, RSWAF and B-spline KAN
layers, the hierarchical local/global block stacking, training and
evaluation, receptive-field and feature-diversity analysis, and
corruption-robustness metrics.
"""

from .tensor import Tensor, ShapeError, set_seed
from .gradcheck import grad_check
from .nn import Module, Parameter
from .attention import (
    DilatedNeighborhoodAttention1d,
    DilatedNeighborhoodAttention2d,
    FeasibilityError,
    GroupConvAttention,
    MultiHeadSelfAttention,
    PooledSelfAttention,
    neighbor_indices,
)
from .kan import KanFeedForward, KanStack, RswafKanLayer, SplineKanLayer, rswaf_eval
from .blocks import ConvFeedForward, GlobalBlock, LocalBlock
from .model import (
    DinaKanNet,
    ModelConfig,
    StageSpec,
    build_model,
    build_preset,
    config_base,
    config_large,
    config_micro,
    config_small,
    config_tiny,
)
from .accounting import count_flops, count_params
from .analysis import analytic_rf, empirical_rf, feature_cosine_distance, grad_cam
from .metrics import (
    BaselineErrorTable,
    SeverityErrors,
    aggregate,
    balanced_accuracy,
    corruption_error_ratio,
    relative_error_ratio,
)
from .corruption import corrupt_image
from .data import Dataset, load_idx
from .optim import AdamW, TrainConfig, adamw_step, lr_at
from .train import evaluate, roc_auc, train
from .checkpoint import load_checkpoint, load_into_model, save_checkpoint
from .estimator import DinaKanClassifier

__version__ = "0.1.0"

__all__ = [
    "AdamW", "BaselineErrorTable", "ConvFeedForward", "Dataset", "DinaKanClassifier",
    "DinaKanNet", "DilatedNeighborhoodAttention1d", "DilatedNeighborhoodAttention2d",
    "FeasibilityError", "GlobalBlock", "GroupConvAttention", "KanFeedForward", "KanStack",
    "LocalBlock", "ModelConfig", "Module", "MultiHeadSelfAttention", "Parameter",
    "PooledSelfAttention", "RswafKanLayer", "SeverityErrors", "ShapeError", "SplineKanLayer",
    "StageSpec", "Tensor", "TrainConfig", "adamw_step", "aggregate", "analytic_rf",
    "balanced_accuracy", "build_model", "build_preset", "config_base", "config_large",
    "config_micro", "config_small", "config_tiny", "corrupt_image", "corruption_error_ratio",
    "count_flops", "count_params", "empirical_rf", "evaluate", "feature_cosine_distance",
    "grad_cam", "grad_check", "load_checkpoint", "load_idx", "load_into_model", "lr_at",
    "neighbor_indices", "relative_error_ratio", "roc_auc", "rswaf_eval", "save_checkpoint",
    "set_seed", "train",
]
