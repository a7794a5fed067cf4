"""
Raster data model and file codecs for depth, normals, masks and optical flow.

Pixel centers sit at integer coordinates with the origin at the top-left pixel,
+x to the right and +y downward. Flow vectors (u, v) use the same axes and are
measured in pixels.

Invalid pixels are carried by an explicit boolean plane. Values stored under an
invalid pixel are always 0 so that NaNs never leak into masked reductions.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import cv2
import numpy as np

from .config import PathLike, atomic_write, dump_json
from .errors import GridFormatError, ManifestError, ShapeMismatchError

logger = logging.getLogger(__name__)

# Middlebury .flo magic tag
TAG_FLOAT = 202021.25

# Components above this magnitude mark unknown flow
UNKNOWN_FLOW_THRESHOLD = 1e9
UNKNOWN_FLOW = 1e10

PNG16_MAX = 65535

# Decoded normals shorter than this carry no direction
MIN_NORMAL_MAGNITUDE = 1e-3

MANIFEST_FORMAT = "densecheck-sequence"
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ScalarGrid:
    """
    H×W map of scalar samples with a validity plane.

    Holds depth maps (metric or normalized relative depth), soft masks in [0, 1]
    and per-pixel weight maps. Arrays are copied and made read-only on
    construction.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if values.ndim != 2:
            raise ShapeMismatchError(f"ScalarGrid values must be 2-D, got shape {values.shape}")
        if valid.shape != values.shape:
            raise ShapeMismatchError(
                f"Validity shape {valid.shape} does not match values shape {values.shape}"
            )
        valid &= np.isfinite(values)
        values[~valid] = 0.0
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def from_array(
        cls, values: np.ndarray, valid: Optional[np.ndarray] = None
    ) -> "ScalarGrid":
        """Build a grid; validity defaults to finiteness of the values."""
        values = np.asarray(values, dtype=np.float64)
        if valid is None:
            valid = np.isfinite(values)
        return cls(values, valid)

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def valid_count(self) -> int:
        return int(self.valid.sum())

    def masked_values(self) -> np.ndarray:
        """Values of valid pixels in row-major order."""
        return self.values[self.valid]

    def with_valid(self, valid: np.ndarray) -> "ScalarGrid":
        """Copy with validity intersected with ``valid``."""
        return ScalarGrid(self.values, self.valid & np.asarray(valid, dtype=bool))

    def with_values(self, values: np.ndarray) -> "ScalarGrid":
        """Copy with new values and the same validity."""
        return ScalarGrid(values, self.valid)

    def is_soft_mask(self) -> bool:
        """True if every valid value lies in [0, 1]."""
        v = self.masked_values()
        return bool(np.all((v >= 0.0) & (v <= 1.0)))


@dataclass(frozen=True, eq=False)
class VectorGrid:
    """
    H×W map of 2-component (flow) or 3-component (normal) vectors.

    Flow grids store pixel displacements (u, v); normal grids store unit vectors
    in camera coordinates.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if values.ndim != 3 or values.shape[2] not in (2, 3):
            raise ShapeMismatchError(
                f"VectorGrid values must have shape (H, W, 2|3), got {values.shape}"
            )
        if valid.shape != values.shape[:2]:
            raise ShapeMismatchError(
                f"Validity shape {valid.shape} does not match grid shape {values.shape[:2]}"
            )
        valid &= np.all(np.isfinite(values), axis=2)
        values[~valid] = 0.0
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def from_array(
        cls, values: np.ndarray, valid: Optional[np.ndarray] = None
    ) -> "VectorGrid":
        """Build a grid; validity defaults to finiteness of every component."""
        values = np.asarray(values, dtype=np.float64)
        if valid is None:
            valid = np.all(np.isfinite(values), axis=-1)
        return cls(values, valid)

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def channels(self) -> int:
        return int(self.values.shape[2])

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def valid_count(self) -> int:
        return int(self.valid.sum())

    def masked_values(self) -> np.ndarray:
        """Vectors of valid pixels, shape (N, C)."""
        return self.values[self.valid]

    def with_valid(self, valid: np.ndarray) -> "VectorGrid":
        """Copy with validity intersected with ``valid``."""
        return VectorGrid(self.values, self.valid & np.asarray(valid, dtype=bool))

    def norms(self) -> np.ndarray:
        """Per-pixel Euclidean norm (0 on invalid pixels)."""
        return np.linalg.norm(self.values, axis=2)

    def is_unit(self, tol: float = 1e-4) -> bool:
        """True if every valid vector has norm within ``tol`` of 1."""
        return bool(np.all(np.abs(self.norms()[self.valid] - 1.0) <= tol))


Grid = Union[ScalarGrid, VectorGrid]


def same_shape(*grids: Grid) -> None:
    """Raise ShapeMismatchError unless all grids share height and width."""
    shapes = {g.shape for g in grids}
    if len(shapes) > 1:
        raise ShapeMismatchError(f"Grid shapes differ: {sorted(shapes)}")


def _grid_like(template: Grid, values: np.ndarray, valid: np.ndarray) -> Grid:
    if isinstance(template, ScalarGrid):
        return ScalarGrid(values, valid)
    return VectorGrid(values, valid)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def bilinear_sample_many(
    grid: Grid, xs: np.ndarray, ys: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Bilinearly sample a grid at many subpixel locations.

    A sample is invalid when it lies outside [0, W-1]×[0, H-1] or when any
    neighbor with nonzero weight is invalid.

    Args:
        grid: Scalar or vector grid
        xs: x coordinates (any shape)
        ys: y coordinates (same shape as xs)

    Returns:
        (values, valid); values has shape xs.shape (+ (C,) for vector grids)
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    h, w = grid.shape

    inside = (
        np.isfinite(xs)
        & np.isfinite(ys)
        & (xs >= 0.0)
        & (xs <= w - 1)
        & (ys >= 0.0)
        & (ys <= h - 1)
    )
    xc = np.where(inside, xs, 0.0)
    yc = np.where(inside, ys, 0.0)

    x0 = np.minimum(np.floor(xc).astype(np.int64), w - 1)
    y0 = np.minimum(np.floor(yc).astype(np.int64), h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0

    taps = (
        ((1.0 - fx) * (1.0 - fy), y0, x0),
        (fx * (1.0 - fy), y0, x1),
        ((1.0 - fx) * fy, y1, x0),
        (fx * fy, y1, x1),
    )

    ok = inside.copy()
    vector = isinstance(grid, VectorGrid)
    out_shape = xs.shape + ((grid.channels,) if vector else ())
    out = np.zeros(out_shape, dtype=np.float64)
    for weight, yy, xx in taps:
        ok &= (weight == 0.0) | grid.valid[yy, xx]
        sample = grid.values[yy, xx]
        out += (weight[..., None] * sample) if vector else (weight * sample)

    out[~ok] = 0.0
    return out, ok


def bilinear_sample(
    grid: Grid, x: float, y: float
) -> Tuple[Union[float, np.ndarray], bool]:
    """
    Bilinearly sample one subpixel location.

    Returns:
        (sample, valid); sample is a float for scalar grids, a (C,) array otherwise
    """
    values, ok = bilinear_sample_many(grid, np.array([x]), np.array([y]))
    if isinstance(grid, ScalarGrid):
        return float(values[0]), bool(ok[0])
    return values[0], bool(ok[0])


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------


def save_pfm(grid: Grid, path: PathLike) -> Path:
    """
    Write a grid as little-endian PFM ("Pf" grayscale or "PF" 3-channel).

    Invalid pixels are written as NaN. Scanlines are stored bottom-up as the
    format requires. Values are stored as float32, so a float64 grid comes back
    rounded to the nearest float32; magnitudes beyond the float32 range become
    infinite and load as invalid.
    """
    if isinstance(grid, ScalarGrid):
        tag = b"Pf"
        data = np.where(grid.valid, grid.values, np.nan)
    elif grid.channels == 3:
        tag = b"PF"
        data = np.where(grid.valid[..., None], grid.values, np.nan)
    else:
        raise GridFormatError(f"PFM stores 1 or 3 channels, grid has {grid.channels}")

    header = tag + b"\n" + f"{grid.width} {grid.height}\n".encode("ascii") + b"-1.0\n"
    with np.errstate(over="ignore"):
        payload = np.ascontiguousarray(np.flipud(data)).astype("<f4").tobytes()
    return atomic_write(path, header + payload)


def _split_header(raw: bytes, lines: int, path: PathLike) -> Tuple[List[bytes], int]:
    pos = 0
    out = []
    for _ in range(lines):
        end = raw.find(b"\n", pos)
        if end < 0:
            raise GridFormatError(f"Malformed PFM header: {path}")
        out.append(raw[pos:end].strip())
        pos = end + 1
    return out, pos


def load_pfm(path: PathLike) -> Grid:
    """
    Read a PFM file into a ScalarGrid ("Pf") or a 3-channel VectorGrid ("PF").

    Scanlines are returned top-down regardless of the scale sign; non-finite
    samples are marked invalid.

    Raises:
        GridFormatError: Malformed header, unsupported channel count or truncated payload
    """
    raw = Path(path).read_bytes()
    (tag, dims, scale_line), offset = _split_header(raw, 3, path)

    if tag == b"Pf":
        channels = 1
    elif tag == b"PF":
        channels = 3
    else:
        raise GridFormatError(
            f"Unsupported PFM channel tag {tag!r} (channel count must be 1 or 3): {path}"
        )

    try:
        width, height = (int(tok) for tok in dims.split())
        scale = float(scale_line)
    except ValueError:
        raise GridFormatError(f"Malformed PFM header: {path}")
    if width <= 0 or height <= 0 or scale == 0.0:
        raise GridFormatError(f"Malformed PFM header: {path}")

    count = width * height * channels
    payload = raw[offset:]
    if len(payload) < count * 4:
        raise GridFormatError(
            f"Truncated PFM payload: expected {count * 4} bytes, found {len(payload)}: {path}"
        )

    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(payload, dtype=dtype, count=count).astype(np.float64)

    if channels == 1:
        values = np.flipud(data.reshape(height, width))
        return ScalarGrid.from_array(values)
    values = np.flipud(data.reshape(height, width, 3))
    return VectorGrid.from_array(values)


# ---------------------------------------------------------------------------
# Middlebury .flo
# ---------------------------------------------------------------------------


def save_flo(flow: VectorGrid, path: PathLike) -> Path:
    """Write a 2-channel flow grid; invalid vectors get the unknown-flow sentinel."""
    if flow.channels != 2:
        raise GridFormatError(f"Flow grids have 2 channels, got {flow.channels}")
    data = np.where(flow.valid[..., None], flow.values, UNKNOWN_FLOW)
    header = np.array([TAG_FLOAT], dtype="<f4").tobytes()
    header += np.array([flow.width, flow.height], dtype="<i4").tobytes()
    return atomic_write(path, header + data.astype("<f4").tobytes())


def load_flo(path: PathLike) -> VectorGrid:
    """
    Read a Middlebury .flo file.

    Samples with either component magnitude above 1e9 are marked invalid.

    Raises:
        GridFormatError: Bad magic tag, malformed header or payload size mismatch
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise GridFormatError(f"Malformed .flo header: {path}")

    magic = np.frombuffer(raw, dtype="<f4", count=1)[0]
    if magic != np.float32(TAG_FLOAT):
        raise GridFormatError(f"Bad .flo magic tag {magic!r}: {path}")

    width, height = (int(v) for v in np.frombuffer(raw, dtype="<i4", count=2, offset=4))
    if width <= 0 or height <= 0:
        raise GridFormatError(f"Malformed .flo dimensions {width}x{height}: {path}")

    expected = width * height * 2 * 4
    if len(raw) - 12 != expected:
        raise GridFormatError(
            f".flo payload is {len(raw) - 12} bytes, {width}x{height} needs {expected}: {path}"
        )

    data = np.frombuffer(raw, dtype="<f4", offset=12).astype(np.float64)
    values = data.reshape(height, width, 2)
    valid = np.all(np.abs(values) <= UNKNOWN_FLOW_THRESHOLD, axis=2)
    return VectorGrid(values, valid)


# ---------------------------------------------------------------------------
# 16-bit PNG
# ---------------------------------------------------------------------------


def _write_png(array: np.ndarray, path: PathLike) -> Path:
    ok, buffer = cv2.imencode(".png", array)
    if not ok:
        raise GridFormatError(f"PNG encoding failed: {path}")
    return atomic_write(path, buffer.tobytes())


def _read_png(path: PathLike) -> np.ndarray:
    if not Path(path).exists():
        raise FileNotFoundError(f"No such file: {path}")
    image = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if image is None:
        raise GridFormatError(f"Unreadable PNG: {path}")
    return image


def save_normal_png16(normals: VectorGrid, path: PathLike) -> Path:
    """
    Write unit normals as a 16-bit RGB PNG, n -> round((n + 1) / 2 * 65535).

    Invalid pixels are written as the zero vector, which decodes as invalid.
    """
    if normals.channels != 3:
        raise GridFormatError(f"Normal grids have 3 channels, got {normals.channels}")
    n = np.where(normals.valid[..., None], normals.values, 0.0)
    encoded = np.clip(np.round((n + 1.0) / 2.0 * PNG16_MAX), 0, PNG16_MAX).astype(np.uint16)
    # OpenCV stores BGR
    return _write_png(np.ascontiguousarray(encoded[..., ::-1]), path)


def load_normal_png16(path: PathLike) -> VectorGrid:
    """
    Read a 16-bit RGB normal PNG.

    Decoded vectors are renormalized to unit length; decoded magnitudes below
    1e-3 are marked invalid.

    Raises:
        GridFormatError: Bit depth other than 16 or channel count other than 3
    """
    image = _read_png(path)
    if image.dtype != np.uint16:
        raise GridFormatError(f"Normal PNG must be 16-bit, got {image.dtype}: {path}")
    if image.ndim != 3 or image.shape[2] != 3:
        channels = 1 if image.ndim == 2 else image.shape[2]
        raise GridFormatError(f"Normal PNG must have 3 channels, got {channels}: {path}")

    rgb = image[..., ::-1].astype(np.float64)
    n = rgb / PNG16_MAX * 2.0 - 1.0
    magnitude = np.linalg.norm(n, axis=2)
    valid = magnitude >= MIN_NORMAL_MAGNITUDE
    safe = np.where(valid, magnitude, 1.0)
    return VectorGrid(n / safe[..., None], valid)


def save_mask_png(mask: ScalarGrid, path: PathLike) -> Path:
    """Write a soft mask as a 16-bit grayscale PNG (value * 65535)."""
    m = np.where(mask.valid, np.clip(mask.values, 0.0, 1.0), 0.0)
    return _write_png(np.round(m * PNG16_MAX).astype(np.uint16), path)


def load_mask_png(path: PathLike) -> ScalarGrid:
    """Read an 8- or 16-bit grayscale mask PNG into a soft mask in [0, 1]."""
    image = _read_png(path)
    if image.ndim != 2:
        raise GridFormatError(f"Mask PNG must be single-channel: {path}")
    if image.dtype == np.uint16:
        values = image.astype(np.float64) / PNG16_MAX
    elif image.dtype == np.uint8:
        values = image.astype(np.float64) / 255.0
    else:
        raise GridFormatError(f"Mask PNG must be 8- or 16-bit, got {image.dtype}: {path}")
    return ScalarGrid.from_array(values)


# ---------------------------------------------------------------------------
# Sequences
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FrameSample:
    """Depth, normals and soft mask of one frame (prediction or ground truth)."""

    depth: ScalarGrid
    normal: VectorGrid
    mask: ScalarGrid

    def __post_init__(self) -> None:
        same_shape(self.depth, self.normal, self.mask)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.depth.shape


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def to_dict(self) -> Dict[str, float]:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Intrinsics":
        return cls(
            fx=float(data["fx"]), fy=float(data["fy"]), cx=float(data["cx"]), cy=float(data["cy"])
        )


@dataclass(frozen=True)
class FrameEntry:
    """File references of one frame, relative to the manifest directory."""

    depth: str
    normal: str
    mask: str
    intrinsics: Intrinsics
    rgb: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "depth": self.depth,
            "normal": self.normal,
            "mask": self.mask,
            "rgb": self.rgb,
            "intrinsics": self.intrinsics.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FrameEntry":
        return cls(
            depth=data["depth"],
            normal=data["normal"],
            mask=data["mask"],
            rgb=data.get("rgb"),
            intrinsics=Intrinsics.from_dict(data["intrinsics"]),
        )


@dataclass
class SequenceManifest:
    """
    One JSON document describing a frame sequence.

    Schema (``manifest.json``)::

        {
          "format": "densecheck-sequence",
          "version": 1,
          "width": W, "height": H, "frame_count": N,
          "frames": [{"depth": ..., "normal": ..., "mask": ..., "rgb": null,
                      "intrinsics": {"fx": ..., "fy": ..., "cx": ..., "cy": ...}}, ...],
          "flows": {"forward": [...], "backward": [...]},
          "metadata": {...}
        }

    Paths are relative to the manifest directory. Ground-truth sequences carry
    N-1 flows per direction (forward k->k+1 and backward k+1->k, indexed by k);
    prediction sequences may carry none.
    """

    width: int
    height: int
    frames: List[FrameEntry]
    flows_forward: List[str] = field(default_factory=list)
    flows_backward: List[str] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)
    root: Path = field(default=Path("."), compare=False)

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def has_flows(self) -> bool:
        return bool(self.flows_forward)

    def resolve(self, relative: str) -> Path:
        """Absolute path of a manifest entry."""
        return self.root / relative

    def validate(self, check_files: bool = True) -> None:
        """
        Check structural invariants.

        Raises:
            ManifestError: Empty frame list, wrong flow counts or missing files
        """
        if self.frame_count < 1:
            raise ManifestError("Manifest lists no frames")
        if self.width <= 0 or self.height <= 0:
            raise ManifestError(f"Invalid manifest size {self.width}x{self.height}")
        if len(self.flows_forward) != len(self.flows_backward):
            raise ManifestError(
                f"{len(self.flows_forward)} forward flows but "
                f"{len(self.flows_backward)} backward flows"
            )
        if self.flows_forward and len(self.flows_forward) != self.frame_count - 1:
            raise ManifestError(
                f"Expected {self.frame_count - 1} flows per direction, "
                f"found {len(self.flows_forward)}"
            )

        if not check_files:
            return
        for entry in self.frames:
            for rel in (entry.depth, entry.normal, entry.mask):
                if not self.resolve(rel).exists():
                    raise ManifestError(f"Missing file: {self.resolve(rel)}")
        for rel in self.flows_forward + self.flows_backward:
            if not self.resolve(rel).exists():
                raise ManifestError(f"Missing file: {self.resolve(rel)}")

    def _check_shape(self, grid: Grid, path: Path) -> None:
        if grid.shape != (self.height, self.width):
            raise ManifestError(
                f"{path} is {grid.width}x{grid.height}, manifest says {self.width}x{self.height}"
            )

    def load_frame(self, index: int) -> FrameSample:
        """Load depth, normals and mask of frame ``index``."""
        entry = self.frames[index]
        depth_path = self.resolve(entry.depth)
        depth = load_pfm(depth_path)
        if not isinstance(depth, ScalarGrid):
            raise ManifestError(f"Depth file must be single-channel PFM: {depth_path}")
        normal_path = self.resolve(entry.normal)
        normal = load_normal_png16(normal_path)
        mask_path = self.resolve(entry.mask)
        mask = load_mask_png(mask_path)
        for grid, path in ((depth, depth_path), (normal, normal_path), (mask, mask_path)):
            self._check_shape(grid, path)
        return FrameSample(depth=depth, normal=normal, mask=mask)

    def load_flows(self, index: int) -> Tuple[VectorGrid, VectorGrid]:
        """Load the (forward k->k+1, backward k+1->k) flow pair for pair ``index``."""
        if not self.has_flows:
            raise ManifestError("Manifest carries no flows")
        fwd_path = self.resolve(self.flows_forward[index])
        bwd_path = self.resolve(self.flows_backward[index])
        fwd = load_flo(fwd_path)
        bwd = load_flo(bwd_path)
        self._check_shape(fwd, fwd_path)
        self._check_shape(bwd, bwd_path)
        return fwd, bwd

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "width": self.width,
            "height": self.height,
            "frame_count": self.frame_count,
            "frames": [f.to_dict() for f in self.frames],
            "flows": {"forward": list(self.flows_forward), "backward": list(self.flows_backward)},
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], root: PathLike = ".") -> "SequenceManifest":
        if data.get("format") != MANIFEST_FORMAT:
            raise ManifestError(f"Not a {MANIFEST_FORMAT} document")
        try:
            frames = [FrameEntry.from_dict(f) for f in data["frames"]]
            flows = data.get("flows") or {}
            manifest = cls(
                width=int(data["width"]),
                height=int(data["height"]),
                frames=frames,
                flows_forward=list(flows.get("forward", [])),
                flows_backward=list(flows.get("backward", [])),
                metadata=dict(data.get("metadata", {})),
                root=Path(root),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"Malformed manifest: {e}")
        if "frame_count" in data and int(data["frame_count"]) != manifest.frame_count:
            raise ManifestError(
                f"frame_count {data['frame_count']} but {manifest.frame_count} frames listed"
            )
        return manifest

    def save(self, path: Optional[PathLike] = None) -> Path:
        """Write the manifest (default: ``<root>/manifest.json``)."""
        target = Path(path) if path is not None else self.root / MANIFEST_NAME
        return atomic_write(target, dump_json(self.to_dict()))

    @classmethod
    def load(cls, path: PathLike, check_files: bool = True) -> "SequenceManifest":
        """
        Load and validate a manifest; a directory argument means its manifest.json.

        Raises:
            ManifestError: Missing, malformed or inconsistent manifest
        """
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        if not path.exists():
            raise ManifestError(f"Manifest not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ManifestError(f"Malformed manifest {path}: {e}")
        manifest = cls.from_dict(data, root=path.parent)
        manifest.validate(check_files=check_files)
        return manifest


def write_sequence(
    out_dir: PathLike,
    samples: Sequence[FrameSample],
    intrinsics: Sequence[Intrinsics],
    flows: Optional[Sequence[Tuple[VectorGrid, VectorGrid]]] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> SequenceManifest:
    """
    Write a frame sequence and its manifest.

    Layout: depth_%04d.pfm, normal_%04d.png, mask_%04d.png, flow_fwd_%04d.flo,
    flow_bwd_%04d.flo and manifest.json in ``out_dir``.

    Args:
        out_dir: Destination directory (created if needed)
        samples: Per-frame grids, all the same size
        intrinsics: Per-frame camera intrinsics
        flows: Optional (forward, backward) flow pair per adjacent frame pair
        metadata: Free-form provenance stored in the manifest

    Returns:
        The saved manifest
    """
    if not samples:
        raise ManifestError("Cannot write an empty sequence")
    if len(intrinsics) != len(samples):
        raise ManifestError(f"{len(samples)} frames but {len(intrinsics)} intrinsics")
    flows = list(flows or [])
    if flows and len(flows) != len(samples) - 1:
        raise ManifestError(f"{len(samples)} frames need {len(samples) - 1} flow pairs")

    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    height, width = samples[0].shape

    frames = []
    for k, (sample, intr) in enumerate(zip(samples, intrinsics)):
        if sample.shape != (height, width):
            raise ShapeMismatchError(f"Frame {k} is {sample.shape}, expected {(height, width)}")
        entry = FrameEntry(
            depth=f"depth_{k:04d}.pfm",
            normal=f"normal_{k:04d}.png",
            mask=f"mask_{k:04d}.png",
            intrinsics=intr,
        )
        save_pfm(sample.depth, root / entry.depth)
        save_normal_png16(sample.normal, root / entry.normal)
        save_mask_png(sample.mask, root / entry.mask)
        frames.append(entry)

    fwd_names, bwd_names = [], []
    for k, (fwd, bwd) in enumerate(flows):
        fwd_names.append(f"flow_fwd_{k:04d}.flo")
        bwd_names.append(f"flow_bwd_{k:04d}.flo")
        save_flo(fwd, root / fwd_names[-1])
        save_flo(bwd, root / bwd_names[-1])

    manifest = SequenceManifest(
        width=width,
        height=height,
        frames=frames,
        flows_forward=fwd_names,
        flows_backward=bwd_names,
        metadata=dict(metadata or {}),
        root=root,
    )
    manifest.save()
    logger.info("Wrote %d frames and %d flow pairs to %s", len(frames), len(flows), root)
    return manifest
