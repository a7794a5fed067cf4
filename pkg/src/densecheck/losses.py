"""
Stage-1 spatial losses and Stage-2 temporal losses.

Includes the stencil operators (Sobel, 5-point Laplacian, average-pool
pyramid), flow warping and the cycle/edge masks the temporal losses use.
Losses are evaluated, never differentiated: this module scores predictions
against ground truth.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .align import AlignmentParams, apply_alignment, fit_scale_shift, mask_support, normalize_depth
from .config import PathLike, load_document, parallel_map
from .errors import ConfigError, EmptyMaskError, ShapeMismatchError
from .grids import (
    FrameSample,
    Grid,
    ScalarGrid,
    VectorGrid,
    bilinear_sample_many,
    same_shape,
)

logger = logging.getLogger(__name__)

BCE_EPS = 1e-7

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T
# Largest response of SOBEL_X to a unit step
SOBEL_NORM = 8.0

LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
_CROSS = ndimage.generate_binary_structure(2, 1)
_SQUARE = np.ones((3, 3), dtype=bool)

# Pyramid levels stop once a side would drop below this
MIN_LEVEL_SIZE = 3


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossConfig:
    """
    Loss weights and regularizer constants.

    Defaults:
        lambda_d=1, lambda_n=0.1, lambda_s=0.05 (Stage-1 weights)
        omega_grad=0.5, alpha=0.5, beta=0.5, eta=1.0 (regularizers)
        lambda_temp_d=1, lambda_temp_n=0.1, tau_c=1.0 px (Stage-2)
        edge_dilate_radius=2 px, edge_threshold=0.05, grad_scales=4
    """

    lambda_d: float = 1.0
    lambda_n: float = 0.1
    lambda_s: float = 0.05
    omega_grad: float = 0.5
    alpha: float = 0.5
    beta: float = 0.5
    eta: float = 1.0
    lambda_temp_d: float = 1.0
    lambda_temp_n: float = 0.1
    tau_c: float = 1.0
    edge_dilate_radius: int = 2
    edge_threshold: float = 0.05
    grad_scales: int = 4

    def __post_init__(self) -> None:
        weights = (
            "lambda_d",
            "lambda_n",
            "lambda_s",
            "omega_grad",
            "alpha",
            "beta",
            "eta",
            "lambda_temp_d",
            "lambda_temp_n",
            "edge_threshold",
        )
        for name in weights:
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be a finite non-negative number, got {value}")
        if not math.isfinite(self.tau_c) or self.tau_c <= 0:
            raise ConfigError(f"tau_c must be positive, got {self.tau_c}")
        if self.grad_scales < 1:
            raise ConfigError(f"grad_scales must be at least 1, got {self.grad_scales}")
        if self.edge_dilate_radius < 0:
            raise ConfigError(f"edge_dilate_radius must be >= 0, got {self.edge_dilate_radius}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LossConfig":
        """
        Build a config from a mapping; missing keys keep their defaults.

        A nested ``loss`` table is accepted so TOML files may group the keys.

        Raises:
            ConfigError: Unknown keys or invalid values, including booleans and non-integral
                values for the integer fields
        """
        if set(data) == {"loss"} and isinstance(data["loss"], dict):
            data = data["loss"]
        known = {f.name: f.type for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"Unknown loss config keys: {', '.join(unknown)}")
        kwargs: Dict[str, Any] = {}
        for key, value in data.items():
            if isinstance(value, bool):
                raise ConfigError(f"{key} must be numeric, got {value!r}")
            try:
                number = float(value)
            except (TypeError, ValueError):
                raise ConfigError(f"{key} must be numeric, got {value!r}")
            if key in _INT_FIELDS:
                if not number.is_integer():
                    raise ConfigError(f"{key} must be an integer, got {value!r}")
                kwargs[key] = int(number)
            else:
                kwargs[key] = number
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: PathLike) -> "LossConfig":
        """Load from a JSON, YAML or TOML document."""
        return cls.from_dict(load_document(path))

    @classmethod
    def preset(cls, name: str) -> "LossConfig":
        """Named weighting preset (see PRESETS)."""
        if name not in PRESETS:
            raise ConfigError(f"Unknown preset '{name}' (choose from {', '.join(PRESETS)})")
        return cls(**PRESETS[name])

    def with_overrides(self, **changes: Any) -> "LossConfig":
        return replace(self, **changes)


_INT_FIELDS = {"edge_dilate_radius", "grad_scales"}

PRESETS: Dict[str, Dict[str, Any]] = {
    "default": {},
    "equal": {"lambda_d": 1.0, "lambda_n": 1.0},
    "normal-half": {"lambda_d": 1.0, "lambda_n": 0.5},
    "depth-half": {"lambda_d": 0.5, "lambda_n": 1.0},
    "no-normal-reg": {"alpha": 0.0, "beta": 0.0},
    "no-temporal": {"lambda_temp_d": 0.0, "lambda_temp_n": 0.0},
}


# ---------------------------------------------------------------------------
# Stencils
# ---------------------------------------------------------------------------


def _stack(g: Grid) -> Tuple[np.ndarray, np.ndarray]:
    """(H, W, C) values and (H, W) validity of any grid."""
    values = g.values if isinstance(g, VectorGrid) else g.values[..., None]
    return values, g.valid


def _check_stencil_size(shape: Tuple[int, ...]) -> None:
    if shape[0] < 3 or shape[1] < 3:
        raise ShapeMismatchError(f"Stencils need at least 3x3 pixels, got {shape[1]}x{shape[0]}")


def _sobel_stack(
    values: np.ndarray, valid: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-channel (gx, gy) of an (H, W, C) stack plus the output validity."""
    _check_stencil_size(values.shape)
    gx = np.empty_like(values)
    gy = np.empty_like(values)
    for c in range(values.shape[2]):
        gx[..., c] = ndimage.correlate(values[..., c], SOBEL_X, mode="nearest")
        gy[..., c] = ndimage.correlate(values[..., c], SOBEL_Y, mode="nearest")
    out_valid = ndimage.binary_erosion(valid, structure=_SQUARE, border_value=0)
    return gx, gy, out_valid


def _laplacian_stack(values: np.ndarray, valid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    _check_stencil_size(values.shape)
    out = np.empty_like(values)
    for c in range(values.shape[2]):
        out[..., c] = ndimage.correlate(values[..., c], LAPLACIAN, mode="nearest")
    return out, ndimage.binary_erosion(valid, structure=_CROSS, border_value=0)


def sobel_gradients(g: Grid) -> List[VectorGrid]:
    """
    Un-normalized 3x3 Sobel responses, one 2-channel (dx, dy) grid per input channel.

    Border pixels and pixels with an invalid neighbor are invalid. A ramp
    v = x responds with dx = 8.

    Raises:
        ShapeMismatchError: If the grid is smaller than 3x3
    """
    values, valid = _stack(g)
    gx, gy, out_valid = _sobel_stack(values, valid)
    return [
        VectorGrid(np.stack([gx[..., c], gy[..., c]], axis=-1), out_valid)
        for c in range(values.shape[2])
    ]


def laplacian(g: Grid) -> Grid:
    """
    5-point Laplacian (4-neighbor sum minus 4x center) of a scalar or vector grid.

    Raises:
        ShapeMismatchError: If the grid is smaller than 3x3
    """
    values, valid = _stack(g)
    out, out_valid = _laplacian_stack(values, valid)
    if isinstance(g, ScalarGrid):
        return ScalarGrid(out[..., 0], out_valid)
    return VectorGrid(out, out_valid)


def _pool(values: np.ndarray, valid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """2x2 average pool; odd trailing rows/columns are cropped."""
    h, w = valid.shape[0] // 2 * 2, valid.shape[1] // 2 * 2
    v = values[:h, :w].reshape(h // 2, 2, w // 2, 2, -1).mean(axis=(1, 3))
    m = valid[:h, :w].reshape(h // 2, 2, w // 2, 2).all(axis=(1, 3))
    return v, m


def pyramid(
    values: np.ndarray, valid: np.ndarray, levels: int
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Up to ``levels`` (values, valid) levels, each a 2x average-pooled copy of
    the previous one. A pooled pixel is valid only if all four sources are.
    """
    out = [(values, valid)]
    while len(out) < levels:
        v, m = out[-1]
        if min(m.shape) // 2 < MIN_LEVEL_SIZE:
            break
        out.append(_pool(v, m))
    return out


# ---------------------------------------------------------------------------
# Stage-1 terms
# ---------------------------------------------------------------------------


class DepthTerms(NamedTuple):
    """Depth loss components and the alignment they were computed under."""

    rms: float
    grad: float
    params: AlignmentParams
    pixel_count: int


def gradient_matching_term(residual: ScalarGrid, scales: int) -> float:
    """
    Multi-scale gradient term: per level, the mean over valid pixels of
    |dx r| + |dy r| of the residual r; averaged over levels with any valid pixel.
    """
    values, valid = _stack(residual)
    level_means = []
    for v, m in pyramid(values, valid, scales):
        if min(m.shape) < 3:
            break
        gx, gy, ok = _sobel_stack(v, m)
        if not ok.any():
            continue
        l1 = np.abs(gx[..., 0]) + np.abs(gy[..., 0])
        level_means.append(float(l1[ok].mean()))
    if not level_means:
        return 0.0
    return math.fsum(level_means) / len(level_means)


def depth_loss(
    pred: ScalarGrid, gt_norm: ScalarGrid, mask: ScalarGrid, cfg: LossConfig
) -> DepthTerms:
    """
    Scale/shift-invariant depth loss against normalized ground truth.

    Pixels whose soft mask reaches 0.5 are supervised; their mask values weight
    both the alignment and the RMS term.

    Args:
        pred: Predicted relative depth
        gt_norm: Ground-truth depth normalized to [0, 1]
        mask: Ground-truth soft mask
        cfg: Loss configuration (``grad_scales``)

    Returns:
        DepthTerms(rms, grad, params, pixel_count)

    Raises:
        EmptyMaskError: If no pixel is supervised
    """
    same_shape(pred, gt_norm, mask)
    support = mask_support(mask) & pred.valid & gt_norm.valid
    count = int(support.sum())
    if count == 0:
        raise EmptyMaskError("Depth loss has no supervised pixels")

    weights = ScalarGrid(mask.values, support)
    params = fit_scale_shift(pred, gt_norm, weights)
    aligned = apply_alignment(pred, params)

    residual = ScalarGrid(aligned.values - gt_norm.values, support)
    w = mask.values[support]
    rms = math.sqrt(float(np.dot(w, residual.values[support] ** 2)) / float(w.sum()))
    grad = gradient_matching_term(residual, cfg.grad_scales)
    return DepthTerms(rms=rms, grad=grad, params=params, pixel_count=count)


def _normal_support(pred_n: VectorGrid, gt_n: VectorGrid, mask: ScalarGrid) -> np.ndarray:
    same_shape(pred_n, gt_n, mask)
    return mask_support(mask) & pred_n.valid & gt_n.valid


def normal_base_loss(pred_n: VectorGrid, gt_n: VectorGrid, mask: ScalarGrid) -> float:
    """
    Masked mean of ||N - N_hat||_1 + (1 - N . N_hat).

    Raises:
        EmptyMaskError: If no pixel is supervised
    """
    support = _normal_support(pred_n, gt_n, mask)
    if not support.any():
        raise EmptyMaskError("Normal loss has no supervised pixels")
    p = pred_n.values[support]
    g = gt_n.values[support]
    per_pixel = np.abs(p - g).sum(axis=1) + (1.0 - np.sum(p * g, axis=1))
    return float(per_pixel.mean())


def edge_weight(gt_n: VectorGrid, eta: float) -> ScalarGrid:
    """
    w = 1 + eta * minmax(||grad N||), the root-sum-square of every Sobel response.

    Pixels without a gradient (borders, invalid neighbors) get weight 1. When
    the gradient magnitude is constant over valid pixels, w is 1 everywhere.
    """
    gx, gy, ok = _sobel_stack(*_stack(gt_n))
    magnitude = np.sqrt(np.sum(gx**2 + gy**2, axis=2))
    weights = np.ones(gt_n.shape)
    if ok.any():
        lo = float(magnitude[ok].min())
        hi = float(magnitude[ok].max())
        if hi > lo:
            weights[ok] = 1.0 + eta * (magnitude[ok] - lo) / (hi - lo)
    return ScalarGrid.from_array(weights)


def normal_reg_losses(
    pred_n: VectorGrid,
    gt_n: VectorGrid,
    w_edge: ScalarGrid,
    mask: ScalarGrid,
    cfg: LossConfig,
) -> Tuple[float, float]:
    """
    Edge-aware normal regularizers.

    The gradient term is the masked mean of w * ||grad N_hat - grad N||_1 at full
    resolution. The Laplacian term averages, over ``grad_scales`` pyramid levels,
    the masked mean of w * ||lap N_hat - lap N||_1; the weight map and mask are
    pooled alongside the normals.

    Returns:
        (grad_term, lap_term)

    Raises:
        EmptyMaskError: If no supervised pixel has a valid stencil
    """
    support = _normal_support(pred_n, gt_n, mask) & w_edge.valid
    same_shape(pred_n, w_edge)

    pgx, pgy, pok = _sobel_stack(*_stack(pred_n))
    ggx, ggy, gok = _sobel_stack(*_stack(gt_n))
    grad_ok = support & pok & gok
    if not grad_ok.any():
        raise EmptyMaskError("Normal regularizers have no valid stencil pixels")
    grad_l1 = np.abs(pgx - ggx).sum(axis=2) + np.abs(pgy - ggy).sum(axis=2)
    grad_term = float((w_edge.values * grad_l1)[grad_ok].mean())

    # pred, gt and weight pooled as one stack so levels stay aligned
    joint = np.concatenate([pred_n.values, gt_n.values, w_edge.values[..., None]], axis=2)
    level_means = []
    for values, valid in pyramid(joint, support, cfg.grad_scales):
        if min(valid.shape) < 3:
            break
        lap, ok = _laplacian_stack(values[..., :6], valid)
        if not ok.any():
            continue
        l1 = np.abs(lap[..., :3] - lap[..., 3:6]).sum(axis=2)
        level_means.append(float((values[..., 6] * l1)[ok].mean()))
    lap_term = math.fsum(level_means) / len(level_means) if level_means else 0.0
    return grad_term, lap_term


def seg_bce_loss(pred_s: ScalarGrid, gt_s: ScalarGrid) -> float:
    """Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7]."""
    same_shape(pred_s, gt_s)
    ok = pred_s.valid & gt_s.valid
    if not ok.any():
        return 0.0
    p = np.clip(pred_s.values[ok], BCE_EPS, 1.0 - BCE_EPS)
    g = gt_s.values[ok]
    return float(np.mean(-(g * np.log(p) + (1.0 - g) * np.log1p(-p))))


# ---------------------------------------------------------------------------
# Warping and temporal masks
# ---------------------------------------------------------------------------


def _pixel_grid(shape: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0 : shape[0], 0 : shape[1]]
    return xs.astype(np.float64), ys.astype(np.float64)


def warp(g: Grid, flow: VectorGrid) -> Grid:
    """
    Backward warp: output(p) = bilinear_sample(g, p + flow(p)).

    Out-of-bounds samples, invalid flow and samples touching invalid pixels are
    invalid.
    """
    same_shape(g, flow)
    xs, ys = _pixel_grid(g.shape)
    values, ok = bilinear_sample_many(g, xs + flow.values[..., 0], ys + flow.values[..., 1])
    ok &= flow.valid
    if isinstance(g, ScalarGrid):
        return ScalarGrid(values, ok)
    return VectorGrid(values, ok)


def cycle_mask(fwd: VectorGrid, bwd: VectorGrid, tau_c: float) -> ScalarGrid:
    """
    1 where ||fwd(p) + bwd(p + fwd(p))|| <= tau_c, else 0.

    Pixels whose round-trip sample is invalid are 0.
    """
    same_shape(fwd, bwd)
    xs, ys = _pixel_grid(fwd.shape)
    back, ok = bilinear_sample_many(bwd, xs + fwd.values[..., 0], ys + fwd.values[..., 1])
    ok &= fwd.valid
    round_trip = np.linalg.norm(fwd.values + back, axis=2)
    keep = ok & (round_trip <= tau_c)
    return ScalarGrid.from_array(keep.astype(np.float64))


def depth_edge_mask(pred_d: ScalarGrid, cfg: LossConfig) -> ScalarGrid:
    """
    Complement of the dilated depth-edge map.

    Edges are pixels where the Sobel magnitude (divided by 8) of the
    [0, 1]-normalized depth exceeds ``edge_threshold``, plus the rim of the
    valid region: valid pixels with an invalid 3x3 neighbour (the image border
    does not count). Edges are dilated by a square of radius
    ``edge_dilate_radius``.
    """
    _check_stencil_size(pred_d.shape)
    if pred_d.valid_count == 0:
        return ScalarGrid.from_array(np.ones(pred_d.shape))

    valid = pred_d.valid
    edges = valid & ~ndimage.binary_erosion(valid, structure=_SQUARE, border_value=1)
    norm, degenerate = normalize_depth(pred_d)
    if not degenerate:
        gx, gy, ok = _sobel_stack(*_stack(norm))
        magnitude = np.hypot(gx[..., 0], gy[..., 0]) / SOBEL_NORM
        edges |= ok & (magnitude > cfg.edge_threshold)
    r = cfg.edge_dilate_radius
    if r > 0 and edges.any():
        edges = ndimage.binary_dilation(edges, structure=np.ones((2 * r + 1, 2 * r + 1), bool))
    return ScalarGrid.from_array((~edges).astype(np.float64))


class AlignedPair(NamedTuple):
    """Target values and flow-warped source values on their common valid set."""

    target: np.ndarray
    warped: np.ndarray
    valid: np.ndarray


def flow_aligned_difference(
    target: Grid,
    source: Grid,
    flow: VectorGrid,
    mask: Optional[np.ndarray] = None,
) -> AlignedPair:
    """
    Backward-warp ``source`` onto ``target`` and return both on the shared valid set.

    Warped vector fields are renormalized to unit length; zero-length warped
    vectors are invalid. ``mask`` further restricts the valid set.
    """
    same_shape(target, source, flow)
    warped = warp(source, flow)
    valid = target.valid & warped.valid
    values = warped.values
    if isinstance(warped, VectorGrid):
        length = np.linalg.norm(values, axis=2)
        valid &= length > 0.0
        values = values / np.where(length > 0.0, length, 1.0)[..., None]
    if mask is not None:
        valid &= mask
    return AlignedPair(target=target.values, warped=values, valid=valid)


class TemporalTerm(NamedTuple):
    """Bidirectional temporal loss with the pixels it was averaged over."""

    value: float
    forward: float
    backward: float
    pixel_count: int
    empty: bool


def temporal_mask(
    fwd: VectorGrid,
    bwd: VectorGrid,
    target_depth: Optional[ScalarGrid],
    foreground: Optional[ScalarGrid],
    cfg: LossConfig,
) -> np.ndarray:
    """
    Pixels of the warp-target frame that temporal terms evaluate.

    Cycle-consistent under (fwd, bwd), off the dilated edges of
    ``target_depth`` when given, inside ``foreground`` when given.
    """
    m = cycle_mask(fwd, bwd, cfg.tau_c).values > 0.5
    if target_depth is not None:
        m &= depth_edge_mask(target_depth, cfg).values > 0.5
    if foreground is not None:
        m &= mask_support(foreground)
    return m


def _bidirectional(
    per_pixel: Callable[[AlignedPair], np.ndarray],
    frame_k: Grid,
    frame_k1: Grid,
    fwd: VectorGrid,
    bwd: VectorGrid,
    masks: Tuple[np.ndarray, np.ndarray],
) -> TemporalTerm:
    terms = []
    counts = []
    directions = ((frame_k, frame_k1, fwd, masks[0]), (frame_k1, frame_k, bwd, masks[1]))
    for target, source, flow, m in directions:
        pair = flow_aligned_difference(target, source, flow, m)
        n = int(pair.valid.sum())
        counts.append(n)
        terms.append(float(per_pixel(pair).mean()) if n else 0.0)
    total = sum(counts)
    if total == 0:
        logger.warning("Temporal mask is empty; loss reported as 0")
    return TemporalTerm(
        value=terms[0] + terms[1],
        forward=terms[0],
        backward=terms[1],
        pixel_count=total,
        empty=total == 0,
    )


def temporal_depth_loss(
    dk: ScalarGrid,
    dk1: ScalarGrid,
    fwd: VectorGrid,
    bwd: VectorGrid,
    cfg: LossConfig,
    mask_k: Optional[ScalarGrid] = None,
    mask_k1: Optional[ScalarGrid] = None,
) -> TemporalTerm:
    """
    Bidirectional flow-aligned L1 depth loss.

    Forward: mean over M_k of |D_k - W(D_k+1, fwd)|; backward symmetric with
    bwd. Each M is the cycle mask of its flow pair intersected with the non-edge
    mask of the warp-target frame's predicted depth and the optional
    foreground mask. Each direction is averaged over its own pixels; an empty
    direction contributes 0.
    """
    masks = (
        temporal_mask(fwd, bwd, dk, mask_k, cfg),
        temporal_mask(bwd, fwd, dk1, mask_k1, cfg),
    )
    return _bidirectional(
        lambda pair: np.abs(pair.target - pair.warped)[pair.valid], dk, dk1, fwd, bwd, masks
    )


def temporal_normal_loss(
    nk: VectorGrid,
    nk1: VectorGrid,
    fwd: VectorGrid,
    bwd: VectorGrid,
    cfg: LossConfig,
    mask_k: Optional[ScalarGrid] = None,
    mask_k1: Optional[ScalarGrid] = None,
    depth_k: Optional[ScalarGrid] = None,
    depth_k1: Optional[ScalarGrid] = None,
) -> TemporalTerm:
    """
    Bidirectional cosine deficit 1 - <N_k, W(N_k+1, fwd)> on renormalized warps.

    Edge masks are applied when the predicted depths of the two frames are given.
    """
    masks = (
        temporal_mask(fwd, bwd, depth_k, mask_k, cfg),
        temporal_mask(bwd, fwd, depth_k1, mask_k1, cfg),
    )

    def deficit(pair: AlignedPair) -> np.ndarray:
        return (1.0 - np.sum(pair.target * pair.warped, axis=2))[pair.valid]

    return _bidirectional(deficit, nk, nk1, fwd, bwd, masks)


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


@dataclass
class LossBreakdown:
    """Named loss components, their weighted total and the pixel counts behind them."""

    depth: float = 0.0
    depth_grad: float = 0.0
    normal_base: float = 0.0
    normal_grad: float = 0.0
    normal_lap: float = 0.0
    seg: float = 0.0
    temp_depth: float = 0.0
    temp_normal: float = 0.0
    total: float = 0.0
    pixel_count: int = 0
    temporal_pixel_count: int = 0
    alignment_degenerate: bool = False
    temporal_empty: bool = False
    extras: Dict[str, Any] = field(default_factory=dict)

    COMPONENTS = (
        "depth",
        "depth_grad",
        "normal_base",
        "normal_grad",
        "normal_lap",
        "seg",
        "temp_depth",
        "temp_normal",
    )

    def weighted_total(self, cfg: LossConfig) -> float:
        """lambda_d (depth + omega grad) + lambda_n (base + alpha grad + beta lap)
        + lambda_s seg + lambda_temp_d temp_depth + lambda_temp_n temp_normal."""
        return math.fsum(
            [
                cfg.lambda_d * self.depth,
                cfg.lambda_d * cfg.omega_grad * self.depth_grad,
                cfg.lambda_n * self.normal_base,
                cfg.lambda_n * cfg.alpha * self.normal_grad,
                cfg.lambda_n * cfg.beta * self.normal_lap,
                cfg.lambda_s * self.seg,
                cfg.lambda_temp_d * self.temp_depth,
                cfg.lambda_temp_n * self.temp_normal,
            ]
        )

    def to_dict(self) -> Dict[str, Any]:
        data = {name: getattr(self, name) for name in self.COMPONENTS}
        data.update(
            total=self.total,
            pixel_count=self.pixel_count,
            temporal_pixel_count=self.temporal_pixel_count,
            alignment_degenerate=self.alignment_degenerate,
            temporal_empty=self.temporal_empty,
        )
        data.update(self.extras)
        return data


def stage1_loss(pred: FrameSample, gt: FrameSample, cfg: LossConfig) -> LossBreakdown:
    """
    Stage-1 objective for one image.

    Ground-truth depth is min-max normalized; the ground-truth mask gates depth
    and normal supervision and is the segmentation target.
    """
    same_shape(pred.depth, gt.depth)
    gt_norm, _ = normalize_depth(gt.depth)
    depth = depth_loss(pred.depth, gt_norm, gt.mask, cfg)
    base = normal_base_loss(pred.normal, gt.normal, gt.mask)
    w = edge_weight(gt.normal, cfg.eta)
    grad, lap = normal_reg_losses(pred.normal, gt.normal, w, gt.mask, cfg)
    seg = seg_bce_loss(pred.mask, gt.mask)

    out = LossBreakdown(
        depth=depth.rms,
        depth_grad=depth.grad,
        normal_base=base,
        normal_grad=grad,
        normal_lap=lap,
        seg=seg,
        pixel_count=depth.pixel_count,
        alignment_degenerate=depth.params.degenerate,
        extras={"scale": depth.params.s, "shift": depth.params.t},
    )
    out.total = out.weighted_total(cfg)
    return out


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


FlowPair = Tuple[VectorGrid, VectorGrid]


def stage2_loss(
    preds: Sequence[FrameSample],
    gts: Sequence[FrameSample],
    flows: Sequence[FlowPair],
    cfg: LossConfig,
    workers: Optional[int] = None,
) -> LossBreakdown:
    """
    Stage-2 objective for a sequence.

    The mean Stage-1 breakdown over frames plus the temporal terms averaged over
    adjacent pairs. Temporal masks use the ground-truth foreground of each
    target frame; edge masks come from the predicted depths.

    Args:
        preds: Predicted frames
        gts: Ground-truth frames
        flows: (forward, backward) flow per adjacent pair
        cfg: Loss configuration
        workers: Thread-pool size for per-frame and per-pair work

    Raises:
        ShapeMismatchError: Fewer than two frames or mismatched list lengths
    """
    n = len(preds)
    if n < 2 or len(gts) != n:
        raise ShapeMismatchError(f"Stage-2 needs >= 2 matching frames, got {n} and {len(gts)}")
    if len(flows) != n - 1:
        raise ShapeMismatchError(f"{n} frames need {n - 1} flow pairs, got {len(flows)}")

    per_frame = parallel_map(lambda k: stage1_loss(preds[k], gts[k], cfg), range(n), workers)

    def pair_terms(k: int) -> Tuple[TemporalTerm, TemporalTerm]:
        fwd, bwd = flows[k]
        td = temporal_depth_loss(
            preds[k].depth, preds[k + 1].depth, fwd, bwd, cfg, gts[k].mask, gts[k + 1].mask
        )
        tn = temporal_normal_loss(
            preds[k].normal,
            preds[k + 1].normal,
            fwd,
            bwd,
            cfg,
            gts[k].mask,
            gts[k + 1].mask,
            preds[k].depth,
            preds[k + 1].depth,
        )
        return td, tn

    per_pair = parallel_map(pair_terms, range(n - 1), workers)

    out = LossBreakdown(
        **{
            name: _mean([getattr(b, name) for b in per_frame])
            for name in LossBreakdown.COMPONENTS[:6]
        }
    )
    out.temp_depth = _mean([td.value for td, _ in per_pair])
    out.temp_normal = _mean([tn.value for _, tn in per_pair])
    out.pixel_count = sum(b.pixel_count for b in per_frame)
    out.temporal_pixel_count = sum(td.pixel_count for td, _ in per_pair)
    out.alignment_degenerate = any(b.alignment_degenerate for b in per_frame)
    out.temporal_empty = any(td.empty or tn.empty for td, tn in per_pair)
    out.extras = {"frame_count": n, "pair_count": n - 1}
    out.total = out.weighted_total(cfg)
    return out

