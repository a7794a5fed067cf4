"""
Evaluation metrics for depth, normals and their temporal consistency.

Image metrics: RMSE, AbsRel, mean/median angular error and Acc at angular
thresholds. Temporal metrics, on flow-aligned adjacent frames: OPW, TC-RMSE,
TC-Mean and TC-Abs. Angles are reported in degrees.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .align import AlignmentParams, apply_alignment, fit_scale_shift, mask_support
from .errors import ConfigError, EmptyMaskError
from .grids import FrameSample, Grid, ScalarGrid, VectorGrid, same_shape
from .losses import AlignedPair, LossConfig, flow_aligned_difference, temporal_mask

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (11.25, 22.5, 30.0)

# Fields pooled as root-mean-square rather than plain means
RMS_FIELDS = frozenset({"rmse", "tc_rmse"})

# Integer fields summed rather than averaged
COUNT_FIELDS = frozenset({"pixel_count", "absrel_count", "nonpositive_count", "pair_count"})

# Record identifiers, never aggregated
INDEX_FIELDS = frozenset({"frame", "pair"})

# Fields pooled by a count other than pixel_count
POOL_WEIGHTS = {"absrel": "absrel_count"}


def acc_key(threshold: float) -> str:
    """Stable column name for an accuracy threshold, e.g. 11.25 -> acc_11_25."""
    return "acc_" + f"{threshold:g}".replace(".", "_")


def angles_deg(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-row angle between unit vectors, degrees, with the dot product clamped."""
    dot = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    return np.degrees(np.arccos(dot))


def lower_median(values: np.ndarray) -> float:
    """Exact median; the lower of the two middle values for even counts."""
    k = (values.size - 1) // 2
    return float(np.partition(values, k)[k])


# ---------------------------------------------------------------------------
# Image metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DepthMetrics:
    """RMSE and AbsRel over the evaluated pixels, with the alignment applied."""

    rmse: float
    absrel: Optional[float]
    pixel_count: int
    absrel_count: int
    nonpositive_count: int
    scale: float = 1.0
    shift: float = 0.0
    degenerate: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rmse": self.rmse,
            "absrel": self.absrel,
            "pixel_count": self.pixel_count,
            "absrel_count": self.absrel_count,
            "nonpositive_count": self.nonpositive_count,
            "scale": self.scale,
            "shift": self.shift,
            "degenerate": self.degenerate,
        }


def depth_metrics(
    pred: ScalarGrid,
    gt: ScalarGrid,
    mask: Optional[ScalarGrid] = None,
    aligned: bool = True,
    params: Optional[AlignmentParams] = None,
) -> DepthMetrics:
    """
    RMSE and AbsRel of a depth prediction.

    Args:
        pred: Predicted depth
        gt: Ground-truth depth
        mask: Soft mask; pixels at or above 0.5 are evaluated (all pixels if None)
        aligned: Fit a per-image scale/shift before measuring
        params: Precomputed alignment (e.g. per sequence); overrides ``aligned``

    Returns:
        DepthMetrics; ``absrel`` is None when no evaluated pixel has gt > 0

    Raises:
        EmptyMaskError: If the evaluation set is empty
    """
    same_shape(pred, gt)
    support = pred.valid & gt.valid
    if mask is not None:
        same_shape(pred, mask)
        support &= mask_support(mask)
    count = int(support.sum())
    if count == 0:
        raise EmptyMaskError("Depth metrics have no evaluated pixels")

    if params is None:
        if aligned:
            weights = mask if mask is not None else ScalarGrid.from_array(np.ones(pred.shape))
            params = fit_scale_shift(pred, gt, ScalarGrid(weights.values, support))
        else:
            params = AlignmentParams.identity()
    pred = apply_alignment(pred, params)

    p = pred.values[support]
    g = gt.values[support]
    diff = p - g
    rmse = math.sqrt(float(np.mean(diff**2)))

    positive = g > 0.0
    n_pos = int(positive.sum())
    absrel = float(np.mean(np.abs(diff[positive]) / g[positive])) if n_pos else None
    if n_pos < count:
        logger.debug("%d evaluated pixels have non-positive depth", count - n_pos)
    return DepthMetrics(
        rmse=rmse,
        absrel=absrel,
        pixel_count=count,
        absrel_count=n_pos,
        nonpositive_count=count - n_pos,
        scale=params.s,
        shift=params.t,
        degenerate=params.degenerate,
    )


@dataclass(frozen=True)
class NormalMetrics:
    """Angular error statistics in degrees."""

    mean_deg: float
    median_deg: float
    acc: Dict[float, float]
    pixel_count: int

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "mean_deg": self.mean_deg,
            "median_deg": self.median_deg,
            "pixel_count": self.pixel_count,
        }
        for threshold, fraction in self.acc.items():
            data[acc_key(threshold)] = fraction
        return data


def _check_thresholds(thresholds: Sequence[float]) -> None:
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ConfigError(f"Thresholds must be strictly increasing, got {list(thresholds)}")


def normal_metrics(
    pred_n: VectorGrid,
    gt_n: VectorGrid,
    mask: Optional[ScalarGrid] = None,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> NormalMetrics:
    """
    Mean, median and Acc_t of the per-pixel angle arccos(<N_hat, N>).

    Acc_t is the fraction of pixels with angle strictly below t degrees.

    Raises:
        EmptyMaskError: If the evaluation set is empty
        ConfigError: If thresholds are not strictly increasing
    """
    _check_thresholds(thresholds)
    same_shape(pred_n, gt_n)
    support = pred_n.valid & gt_n.valid
    if mask is not None:
        support &= mask_support(mask)
    if not support.any():
        raise EmptyMaskError("Normal metrics have no evaluated pixels")

    angles = angles_deg(pred_n.values[support], gt_n.values[support])
    return NormalMetrics(
        mean_deg=float(angles.mean()),
        median_deg=lower_median(angles),
        acc={float(t): float(np.mean(angles < t)) for t in thresholds},
        pixel_count=int(angles.size),
    )


# ---------------------------------------------------------------------------
# Temporal metrics
# ---------------------------------------------------------------------------


def _aligned(
    pred_k: Grid, pred_k1: Grid, fwd_flow: VectorGrid, mask: Optional[ScalarGrid]
) -> AlignedPair:
    support = mask_support(mask) if mask is not None else None
    pair = flow_aligned_difference(pred_k, pred_k1, fwd_flow, support)
    if not pair.valid.any():
        raise EmptyMaskError("No valid pixels after flow warping")
    return pair


def opw(
    pred_k: Grid, pred_k1: Grid, fwd_flow: VectorGrid, mask: Optional[ScalarGrid] = None
) -> float:
    """
    Flow-warped discrepancy between adjacent frames.

    Depth: mean |D_k - W(D_k+1)|. Normals: mean L1 norm of N_k - W(N_k+1) with
    the warped normals renormalized.
    """
    pair = _aligned(pred_k, pred_k1, fwd_flow, mask)
    diff = np.abs(pair.target - pair.warped)[pair.valid]
    if diff.ndim == 2:
        diff = diff.sum(axis=1)
    return float(diff.mean())


def tc_rmse(
    pred_k: ScalarGrid,
    pred_k1: ScalarGrid,
    fwd_flow: VectorGrid,
    mask: Optional[ScalarGrid] = None,
) -> float:
    """sqrt(mean (D_k - W(D_k+1))^2) over the warp-valid set."""
    pair = _aligned(pred_k, pred_k1, fwd_flow, mask)
    diff = (pair.target - pair.warped)[pair.valid]
    return math.sqrt(float(np.mean(diff**2)))


def _pair_angles(pair: AlignedPair) -> np.ndarray:
    return angles_deg(pair.target, pair.warped)


def tc_mean(
    pred_nk: VectorGrid,
    pred_nk1: VectorGrid,
    fwd_flow: VectorGrid,
    mask: Optional[ScalarGrid] = None,
) -> float:
    """Mean angle between frame-k normals and flow-warped frame-(k+1) normals, degrees."""
    pair = _aligned(pred_nk, pred_nk1, fwd_flow, mask)
    return float(_pair_angles(pair)[pair.valid].mean())


def tc_abs(
    pred_nk: VectorGrid,
    pred_nk1: VectorGrid,
    gt_nk: VectorGrid,
    gt_nk1: VectorGrid,
    fwd_flow: VectorGrid,
    mask: Optional[ScalarGrid] = None,
) -> float:
    """
    Mean |theta_pred - theta_gt|, degrees, where each theta is the angle between a
    frame's normals and the flow-warped next frame's normals.
    """
    support = mask_support(mask) if mask is not None else None
    pred = flow_aligned_difference(pred_nk, pred_nk1, fwd_flow, support)
    gt = flow_aligned_difference(gt_nk, gt_nk1, fwd_flow, support)
    valid = pred.valid & gt.valid
    if not valid.any():
        raise EmptyMaskError("No valid pixels after flow warping")
    return float(np.abs(_pair_angles(pred) - _pair_angles(gt))[valid].mean())


@dataclass(frozen=True)
class TemporalMetrics:
    """Temporal-consistency metrics of one adjacent pair (or an aggregate)."""

    opw: float
    tc_rmse: float
    opw_normal: float
    tc_mean_deg: float
    tc_abs_deg: float
    pixel_count: int
    pair_count: int = 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "opw": self.opw,
            "tc_rmse": self.tc_rmse,
            "opw_normal": self.opw_normal,
            "tc_mean_deg": self.tc_mean_deg,
            "tc_abs_deg": self.tc_abs_deg,
            "pixel_count": self.pixel_count,
            "pair_count": self.pair_count,
        }


def pair_metrics(
    pred_k: FrameSample,
    pred_k1: FrameSample,
    gt_k: FrameSample,
    gt_k1: FrameSample,
    fwd_flow: VectorGrid,
    foreground: bool = True,
    bwd_flow: Optional[VectorGrid] = None,
    cfg: Optional[LossConfig] = None,
) -> TemporalMetrics:
    """
    Every temporal metric for frames (k, k+1).

    With ``foreground`` the evaluation set is restricted to the ground-truth
    mask of frame k; otherwise every warp-valid pixel counts. Given
    ``bwd_flow``, the set is further cut to the forward-direction mask of the
    temporal losses (cycle mask and non-edge mask of ``pred_k``'s depth, with
    thresholds from ``cfg``), so TC-RMSE and the forward temporal depth term
    cover the same pixels.
    """
    mask = gt_k.mask if foreground else None
    if bwd_flow is not None:
        support = temporal_mask(fwd_flow, bwd_flow, pred_k.depth, mask, cfg or LossConfig())
        mask = ScalarGrid.from_array(support.astype(np.float64))
    depth_pair = _aligned(pred_k.depth, pred_k1.depth, fwd_flow, mask)
    return TemporalMetrics(
        opw=opw(pred_k.depth, pred_k1.depth, fwd_flow, mask),
        tc_rmse=tc_rmse(pred_k.depth, pred_k1.depth, fwd_flow, mask),
        opw_normal=opw(pred_k.normal, pred_k1.normal, fwd_flow, mask),
        tc_mean_deg=tc_mean(pred_k.normal, pred_k1.normal, fwd_flow, mask),
        tc_abs_deg=tc_abs(
            pred_k.normal, pred_k1.normal, gt_k.normal, gt_k1.normal, fwd_flow, mask
        ),
        pixel_count=int(depth_pair.valid.sum()),
    )


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def _numeric(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def aggregate(records: Sequence[Mapping[str, Any]], pooled: bool = False) -> Dict[str, Any]:
    """
    Dataset-level summary of per-image or per-pair metric records.

    Default: unweighted mean over records of every numeric field (None values
    skipped). ``pooled`` weights each record by the number of pixels the field
    was measured on: ``absrel_count`` for AbsRel (pixels with positive depth),
    ``pixel_count`` otherwise. RMS fields are then pooled as
    sqrt(sum n v^2 / sum n). Count fields are summed. Sums are compensated
    (math.fsum) so record order never changes the result.

    Returns:
        Mapping of field -> aggregate, plus ``count`` (number of records)

    Raises:
        EmptyMaskError: If there are no records
    """
    if not records:
        raise EmptyMaskError("Cannot aggregate zero records")

    names: List[str] = sorted(
        {k for r in records for k, v in r.items() if _numeric(v) and k not in INDEX_FIELDS}
    )
    out: Dict[str, Any] = {"count": len(records)}
    for name in names:
        weight = POOL_WEIGHTS.get(name, "pixel_count")
        entries: List[Tuple[float, float]] = [
            (float(r[name]), float(r.get(weight, r.get("pixel_count", 1))))
            for r in records
            if _numeric(r.get(name))
        ]
        if name in COUNT_FIELDS:
            out[name] = int(sum(int(v) for v, _ in entries))
        elif not entries:
            out[name] = None
        elif pooled:
            total = math.fsum(w for _, w in entries)
            if name in RMS_FIELDS:
                out[name] = math.sqrt(math.fsum(w * v * v for v, w in entries) / total)
            else:
                out[name] = math.fsum(w * v for v, w in entries) / total
        else:
            out[name] = math.fsum(v for v, _ in entries) / len(entries)
    # fields that were None in every record
    for name in sorted({k for r in records for k in r} - set(names) - INDEX_FIELDS):
        if all(r.get(name) is None for r in records):
            out[name] = None
    return out
