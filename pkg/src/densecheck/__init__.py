"""densecheck - Losses, metrics and ground truth for temporally consistent dense prediction."""

__version__ = "0.1.0"

from .align import AlignmentParams, apply_alignment, fit_scale_shift, normalize_depth
from .errors import (
    ConfigError,
    DenseCheckError,
    EmptyMaskError,
    GridFormatError,
    ManifestError,
    NumericError,
    SceneError,
    ShapeMismatchError,
)
from .features import CwaParams, FeatureVolume, PriorProjection, cwa_forward, cwa_grad, prior_fuse
from .grids import FrameSample, ScalarGrid, SequenceManifest, VectorGrid
from .losses import LossBreakdown, LossConfig, stage1_loss, stage2_loss
from .metrics import aggregate, depth_metrics, normal_metrics, pair_metrics
from .synth import WalkerConfig, generate_sequence, make_walker

__all__ = [
    "AlignmentParams",
    "apply_alignment",
    "fit_scale_shift",
    "normalize_depth",
    "ConfigError",
    "DenseCheckError",
    "EmptyMaskError",
    "GridFormatError",
    "ManifestError",
    "NumericError",
    "SceneError",
    "ShapeMismatchError",
    "CwaParams",
    "FeatureVolume",
    "PriorProjection",
    "cwa_forward",
    "cwa_grad",
    "prior_fuse",
    "FrameSample",
    "ScalarGrid",
    "SequenceManifest",
    "VectorGrid",
    "LossBreakdown",
    "LossConfig",
    "stage1_loss",
    "stage2_loss",
    "aggregate",
    "depth_metrics",
    "normal_metrics",
    "pair_metrics",
    "WalkerConfig",
    "generate_sequence",
    "make_walker",
    "__version__",
]
