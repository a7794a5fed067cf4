"""
Channel reweighting and prior-fusion arithmetic on C x H x W feature volumes.

CWA: q = GAP(F); a = sigmoid(W2 relu(W1 q + b1) + b2); F'(c) = a_c F(c).
Prior fusion: F' = F + resize(P z + b) with a 1x1 projection and bilinear
resize (align_corners=False).

Reverse-mode gradients of <G, F'> are provided for verification against
central finite differences.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, NamedTuple, Optional

import numpy as np
from scipy.special import expit

from .config import DocumentStore, PathLike
from .errors import NumericError, ShapeMismatchError

logger = logging.getLogger(__name__)

# Hidden pre-activations closer than this to the ReLU kink are resampled
KINK_MARGIN = 1e-2


@dataclass(frozen=True, eq=False)
class FeatureVolume:
    """C x H x W tensor of finite values."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise ShapeMismatchError(f"FeatureVolume must be C x H x W, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NumericError("FeatureVolume values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, channels: int, height: int, width: int) -> "FeatureVolume":
        return cls(np.zeros((channels, height, width)))

    @property
    def channels(self) -> int:
        return int(self.values.shape[0])

    @property
    def height(self) -> int:
        return int(self.values.shape[1])

    @property
    def width(self) -> int:
        return int(self.values.shape[2])


def default_hidden(channels: int) -> int:
    """Squeeze width ceil(C / 4), at least 1."""
    return max(1, math.ceil(channels / 4))


@dataclass(frozen=True, eq=False)
class CwaParams:
    """Two-layer MLP of the channel gate: W1 (hidden x C), b1, W2 (C x hidden), b2."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        w1 = np.array(self.w1, dtype=np.float64)
        b1 = np.array(self.b1, dtype=np.float64)
        w2 = np.array(self.w2, dtype=np.float64)
        b2 = np.array(self.b2, dtype=np.float64)
        if w1.ndim != 2 or w1.shape[0] < 1:
            raise ShapeMismatchError(f"W1 must be hidden x C with hidden >= 1, got {w1.shape}")
        hidden, channels = w1.shape
        expected = {"b1": (hidden,), "W2": (channels, hidden), "b2": (channels,)}
        for name, arr in (("b1", b1), ("W2", w2), ("b2", b2)):
            if arr.shape != expected[name]:
                raise ShapeMismatchError(
                    f"{name} must have shape {expected[name]}, got {arr.shape}"
                )
        for name, arr in (("w1", w1), ("b1", b1), ("w2", w2), ("b2", b2)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls, channels: int, hidden: Optional[int] = None) -> "CwaParams":
        hidden = hidden or default_hidden(channels)
        return cls(
            np.zeros((hidden, channels)),
            np.zeros(hidden),
            np.zeros((channels, hidden)),
            np.zeros(channels),
        )

    @property
    def channels(self) -> int:
        return int(self.w1.shape[1])

    @property
    def hidden(self) -> int:
        return int(self.w1.shape[0])

    def to_dict(self) -> Dict[str, Any]:
        """Row-major nested lists."""
        return {
            "channels": self.channels,
            "hidden": self.hidden,
            "W1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "W2": self.w2.tolist(),
            "b2": self.b2.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CwaParams":
        return cls(data["W1"], data["b1"], data["W2"], data["b2"])

    def save(self, path: PathLike) -> None:
        DocumentStore(path).save(self.to_dict())

    @classmethod
    def load(cls, path: PathLike) -> "CwaParams":
        return cls.from_dict(DocumentStore(path).load())


@dataclass(frozen=True, eq=False)
class PriorProjection:
    """1x1 projection P (C_out x C_in) with bias, and an optional output size."""

    p: np.ndarray
    b: Optional[np.ndarray] = None
    out_height: Optional[int] = None
    out_width: Optional[int] = None

    def __post_init__(self) -> None:
        p = np.array(self.p, dtype=np.float64)
        if p.ndim != 2:
            raise ShapeMismatchError(f"P must be C_out x C_in, got shape {p.shape}")
        b = np.zeros(p.shape[0]) if self.b is None else np.array(self.b, dtype=np.float64)
        if b.shape != (p.shape[0],):
            raise ShapeMismatchError(f"Bias must have shape ({p.shape[0]},), got {b.shape}")
        p.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "b", b)

    @property
    def out_channels(self) -> int:
        return int(self.p.shape[0])

    @property
    def in_channels(self) -> int:
        return int(self.p.shape[1])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "P": self.p.tolist(),
            "b": np.asarray(self.b).tolist(),
            "out_height": self.out_height,
            "out_width": self.out_width,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PriorProjection":
        return cls(
            data["P"],
            data.get("b"),
            out_height=data.get("out_height"),
            out_width=data.get("out_width"),
        )


# ---------------------------------------------------------------------------
# Forward
# ---------------------------------------------------------------------------


def gap(volume: FeatureVolume) -> np.ndarray:
    """Global average pool: q_c = mean of channel c over H x W."""
    if volume.height * volume.width == 0:
        raise ShapeMismatchError("Cannot pool an empty feature volume")
    return volume.values.mean(axis=(1, 2))


class _CwaState(NamedTuple):
    q: np.ndarray
    h_pre: np.ndarray
    h: np.ndarray
    a: np.ndarray


def _cwa_state(volume: FeatureVolume, params: CwaParams) -> _CwaState:
    if volume.channels != params.channels:
        raise ShapeMismatchError(
            f"Volume has {volume.channels} channels, params expect {params.channels}"
        )
    q = gap(volume)
    h_pre = params.w1 @ q + params.b1
    h = np.maximum(h_pre, 0.0)
    a = expit(params.w2 @ h + params.b2)
    return _CwaState(q=q, h_pre=h_pre, h=h, a=a)


class CwaOutput(NamedTuple):
    output: FeatureVolume
    attention: np.ndarray


def cwa_forward(volume: FeatureVolume, params: CwaParams) -> CwaOutput:
    """
    Channel-weight adaptation.

    Returns:
        (F', a) with F'(c, h, w) = a_c * F(c, h, w) and a in (0, 1)^C
    """
    state = _cwa_state(volume, params)
    return CwaOutput(FeatureVolume(state.a[:, None, None] * volume.values), state.a)


class CwaGradients(NamedTuple):
    """Gradients of <G, F'> with respect to every input."""

    volume: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def as_dict(self) -> Dict[str, np.ndarray]:
        return dict(self._asdict())


def cwa_grad(volume: FeatureVolume, params: CwaParams, upstream: FeatureVolume) -> CwaGradients:
    """
    Analytic reverse-mode gradients of L = <upstream, cwa_forward(F)>.

    The volume gradient has a direct part a_c G(c) and a pooled part that flows
    back through the gate and GAP, spread uniformly over H x W.
    """
    if upstream.values.shape != volume.values.shape:
        raise ShapeMismatchError(
            f"Upstream shape {upstream.values.shape} != volume shape {volume.values.shape}"
        )
    state = _cwa_state(volume, params)
    g = upstream.values
    f = volume.values

    d_a = np.einsum("chw,chw->c", g, f)
    d_z = d_a * state.a * (1.0 - state.a)
    d_w2 = np.outer(d_z, state.h)
    d_h = params.w2.T @ d_z
    d_hpre = d_h * (state.h_pre > 0.0)
    d_w1 = np.outer(d_hpre, state.q)
    d_q = params.w1.T @ d_hpre

    spatial = volume.height * volume.width
    d_f = state.a[:, None, None] * g + (d_q / spatial)[:, None, None]
    return CwaGradients(volume=d_f, w1=d_w1, b1=d_hpre, w2=d_w2, b2=d_z)


def _axis_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) linear-interpolation matrix, align_corners=False, edge-clamped."""
    scale = n_in / n_out
    src = np.clip((np.arange(n_out) + 0.5) * scale - 0.5, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    weights = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(weights, (rows, i0), 1.0 - frac)
    np.add.at(weights, (rows, i1), frac)
    return weights


def bilinear_resize(volume: FeatureVolume, out_h: int, out_w: int) -> FeatureVolume:
    """
    Bilinear resize with the align_corners=False convention.

    Source coordinate of output index i is (i + 0.5) * in / out - 0.5, clamped
    to the input extent.
    """
    if out_h < 1 or out_w < 1:
        raise ShapeMismatchError(f"Output size must be positive, got {out_h}x{out_w}")
    if (out_h, out_w) == (volume.height, volume.width):
        return volume
    ry = _axis_weights(volume.height, out_h)
    rx = _axis_weights(volume.width, out_w)
    return FeatureVolume(np.einsum("yh,chw,xw->cyx", ry, volume.values, rx))


def prior_fuse(
    f_dpt: FeatureVolume, z: FeatureVolume, proj: PriorProjection
) -> FeatureVolume:
    """
    F' = F_dpt + resize(P z + b) to F_dpt's spatial size.

    Raises:
        ShapeMismatchError: Channel counts or the projection's output size disagree
    """
    if proj.in_channels != z.channels:
        raise ShapeMismatchError(
            f"Projection expects {proj.in_channels} prior channels, got {z.channels}"
        )
    if proj.out_channels != f_dpt.channels:
        raise ShapeMismatchError(
            f"Projection emits {proj.out_channels} channels, decoder has {f_dpt.channels}"
        )
    target = (proj.out_height or f_dpt.height, proj.out_width or f_dpt.width)
    if target != (f_dpt.height, f_dpt.width):
        raise ShapeMismatchError(
            f"Projection resizes to {target}, decoder features are {f_dpt.height}x{f_dpt.width}"
        )
    projected = FeatureVolume(
        np.einsum("oc,chw->ohw", proj.p, z.values) + np.asarray(proj.b)[:, None, None]
    )
    resized = bilinear_resize(projected, f_dpt.height, f_dpt.width)
    return FeatureVolume(f_dpt.values + resized.values)


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------


def finite_difference_grad(
    fn: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-4
) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        up = fn(x)
        x[idx] = orig - step
        down = fn(x)
        x[idx] = orig
        grad[idx] = (up - down) / (2.0 * step)
    return grad


def cwa_objective(volume: FeatureVolume, params: CwaParams, upstream: FeatureVolume) -> float:
    """<upstream, cwa_forward(volume)>."""
    return float(np.sum(upstream.values * cwa_forward(volume, params).output.values))


def cwa_numeric_grad(
    volume: FeatureVolume, params: CwaParams, upstream: FeatureVolume, step: float = 1e-4
) -> CwaGradients:
    """Finite-difference counterpart of cwa_grad."""
    arrays = {
        "volume": volume.values,
        "w1": params.w1,
        "b1": params.b1,
        "w2": params.w2,
        "b2": params.b2,
    }

    def objective_of(name: str) -> Callable[[np.ndarray], float]:
        def fn(x: np.ndarray) -> float:
            current = dict(arrays, **{name: x})
            return cwa_objective(
                FeatureVolume(current["volume"]),
                CwaParams(current["w1"], current["b1"], current["w2"], current["b2"]),
                upstream,
            )

        return fn

    grads = {
        name: finite_difference_grad(objective_of(name), arr, step)
        for name, arr in arrays.items()
    }
    return CwaGradients(**grads)


def gradcheck(analytic: Dict[str, np.ndarray], numeric: Dict[str, np.ndarray]) -> Dict[str, float]:
    """
    Per-tensor relative error max|a - n| / max(max|a|, max|n|, 1e-12).
    """
    errors = {}
    for name, a in analytic.items():
        n = numeric[name]
        scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(n), initial=0.0)))
        errors[name] = float(np.max(np.abs(a - n), initial=0.0)) / max(scale, 1e-12)
    return errors


class CwaInstance(NamedTuple):
    volume: FeatureVolume
    params: CwaParams
    upstream: FeatureVolume


def random_cwa_instance(
    seed: int, channels: int = 3, hidden: Optional[int] = None, size: int = 2
) -> CwaInstance:
    """
    Seeded random CWA problem.

    Parameters are redrawn until every hidden pre-activation is at least 1e-2
    away from the ReLU kink, where finite differences are unreliable.

    Raises:
        NumericError: If 1000 draws all land near the kink
    """
    hidden = hidden or default_hidden(channels)
    rng = np.random.default_rng(seed)
    volume = FeatureVolume(rng.normal(size=(channels, size, size)))
    upstream = FeatureVolume(rng.normal(size=(channels, size, size)))
    q = gap(volume)
    for attempt in range(1000):
        params = CwaParams(
            rng.normal(scale=0.5, size=(hidden, channels)),
            rng.normal(scale=0.5, size=hidden),
            rng.normal(scale=0.5, size=(channels, hidden)),
            rng.normal(scale=0.5, size=channels),
        )
        if np.all(np.abs(params.w1 @ q + params.b1) >= KINK_MARGIN):
            if attempt:
                logger.debug("Seed %d: resampled CWA params %d times", seed, attempt)
            return CwaInstance(volume, params, upstream)
    raise NumericError(f"Could not draw CWA params away from the ReLU kink (seed {seed})")


class GradcheckResult(NamedTuple):
    seed: int
    errors: Dict[str, float]

    @property
    def max_error(self) -> float:
        return max(self.errors.values())


def run_cwa_gradcheck(
    seed: int,
    channels: int = 3,
    hidden: Optional[int] = None,
    size: int = 2,
    step: float = 1e-4,
    corrupt: bool = False,
    zero_upstream: bool = False,
) -> GradcheckResult:
    """
    Compare cwa_grad with central differences on one seeded instance.

    ``corrupt`` scales the analytic volume gradient by 1.5 to exercise the
    failure path; ``zero_upstream`` replaces G with zeros.
    """
    instance = random_cwa_instance(seed, channels, hidden, size)
    upstream = instance.upstream
    if zero_upstream:
        upstream = FeatureVolume(np.zeros_like(upstream.values))
    analytic = cwa_grad(instance.volume, instance.params, upstream)
    if corrupt:
        analytic = analytic._replace(volume=analytic.volume * 1.5)
    numeric = cwa_numeric_grad(instance.volume, instance.params, upstream, step)
    return GradcheckResult(seed, gradcheck(analytic.as_dict(), numeric.as_dict()))
