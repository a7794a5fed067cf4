"""
Depth normalization and least-squares scale/shift alignment.

Relative-depth predictions carry an unknown affine ambiguity. Every depth loss
and depth metric first fits (s, t) minimizing sum_i w_i (s * pred_i + t - gt_i)^2
over the supervised pixels, with soft-mask values as the weights w_i.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from .errors import EmptyMaskError, ShapeMismatchError
from .grids import ScalarGrid, same_shape

logger = logging.getLogger(__name__)

# Soft-mask level at which a pixel counts as supervised foreground
MASK_THRESHOLD = 0.5

# Relative weighted variance below which pred is treated as constant
_VARIANCE_EPS = 1e-12


@dataclass(frozen=True)
class AlignmentParams:
    """Fitted scale and shift; ``degenerate`` marks the constant-pred fallback."""

    s: float
    t: float
    valid_count: int
    degenerate: bool = False

    @classmethod
    def identity(cls) -> "AlignmentParams":
        return cls(s=1.0, t=0.0, valid_count=0)

    @property
    def negative_scale(self) -> bool:
        return self.s < 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scale": self.s,
            "shift": self.t,
            "valid_count": self.valid_count,
            "degenerate": self.degenerate,
        }


def mask_support(mask: ScalarGrid, threshold: float = MASK_THRESHOLD) -> np.ndarray:
    """Boolean plane of pixels whose soft-mask value reaches ``threshold``."""
    return mask.valid & (mask.values >= threshold)


def normalize_depth(d_star: ScalarGrid) -> Tuple[ScalarGrid, bool]:
    """
    Min-max normalize depth to [0, 1] over valid pixels.

    Args:
        d_star: Depth map (any unit)

    Returns:
        (normalized grid, degenerate); a constant map yields zeros and True

    Raises:
        EmptyMaskError: If the map has no valid pixel
    """
    values = d_star.masked_values()
    if values.size == 0:
        raise EmptyMaskError("Cannot normalize a depth map with no valid pixels")

    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        logger.debug("Constant depth map (%g) normalizes to zeros", lo)
        return d_star.with_values(np.zeros(d_star.shape)), True
    return d_star.with_values((d_star.values - lo) / (hi - lo)), False


def _weights(pred: ScalarGrid, gt: ScalarGrid, mask: ScalarGrid) -> np.ndarray:
    same_shape(pred, gt, mask)
    usable = pred.valid & gt.valid & mask.valid
    return np.where(usable, np.clip(mask.values, 0.0, None), 0.0)


def _solve(p: np.ndarray, g: np.ndarray, w: np.ndarray) -> AlignmentParams:
    """Weighted 2x2 normal equations over flat arrays; zero weights are ignored."""
    keep = w > 0.0
    p, g, w = p[keep], g[keep], w[keep]
    count = int(p.size)

    sw = float(w.sum())
    if count == 0:
        logger.warning("Alignment has no supervised pixels; using identity")
        return AlignmentParams(s=1.0, t=0.0, valid_count=0, degenerate=True)

    mean_p = float(np.dot(w, p)) / sw
    var_p = float(np.dot(w, (p - mean_p) ** 2))
    scale_p = float(np.dot(w, p * p))
    if count < 2 or var_p <= _VARIANCE_EPS * max(scale_p, 1.0):
        t = float(np.dot(w, g - p)) / sw
        logger.warning("Ill-posed alignment over %d pixels; falling back to s=1, t=%g", count, t)
        return AlignmentParams(s=1.0, t=t, valid_count=count, degenerate=True)

    normal = np.array([[scale_p, float(np.dot(w, p))], [float(np.dot(w, p)), sw]])
    rhs = np.array([float(np.dot(w, p * g)), float(np.dot(w, g))])
    s, t = np.linalg.solve(normal, rhs)
    if s < 0:
        logger.info("Alignment produced a negative scale %g", s)
    return AlignmentParams(s=float(s), t=float(t), valid_count=count)


def fit_scale_shift(pred: ScalarGrid, gt: ScalarGrid, mask: ScalarGrid) -> AlignmentParams:
    """
    Closed-form weighted least-squares scale and shift aligning pred to gt.

    Soft-mask values act as per-pixel weights; pixels invalid in any input or
    with zero weight never influence the result. A negative scale is returned
    as-is.

    Args:
        pred: Predicted (relative) depth
        gt: Target depth
        mask: Soft weights in [0, 1]

    Returns:
        AlignmentParams; ``degenerate`` is set when fewer than two pixels carry
        weight or pred is constant over them (then s = 1 and t is the weighted
        mean residual)
    """
    w = _weights(pred, gt, mask)
    return _solve(pred.values.ravel(), gt.values.ravel(), w.ravel())


def fit_scale_shift_sequence(
    preds: Sequence[ScalarGrid], gts: Sequence[ScalarGrid], masks: Sequence[ScalarGrid]
) -> AlignmentParams:
    """One (s, t) shared by every frame of a sequence, fitted over all frames jointly."""
    if not (len(preds) == len(gts) == len(masks)) or not preds:
        raise ShapeMismatchError(
            f"Sequence alignment needs equal non-empty lists, got "
            f"{len(preds)}/{len(gts)}/{len(masks)}"
        )
    weights = [_weights(p, g, m).ravel() for p, g, m in zip(preds, gts, masks)]
    return _solve(
        np.concatenate([p.values.ravel() for p in preds]),
        np.concatenate([g.values.ravel() for g in gts]),
        np.concatenate(weights),
    )


def apply_alignment(pred: ScalarGrid, params: AlignmentParams) -> ScalarGrid:
    """Elementwise s * v + t on valid pixels; validity is preserved."""
    return pred.with_values(params.s * pred.values + params.t)


def alignment_objective(
    pred: ScalarGrid, gt: ScalarGrid, mask: ScalarGrid, s: float, t: float
) -> float:
    """Weighted squared error sum_i w_i (s * pred_i + t - gt_i)^2."""
    w = _weights(pred, gt, mask)
    return float(np.sum(w * (s * pred.values + t - gt.values) ** 2))
