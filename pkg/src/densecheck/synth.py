"""
Procedural ground truth from ray-cast capsule figures.

A figure is a set of capsules (segments swept by a sphere), each moved by its
own rigid transform per frame and viewed by a pinhole camera. Rendering is
closed-form: per pixel, the nearest ray/capsule intersection gives depth
(camera-space z), the exact outward normal and the foreground mask. Optical
flow comes from transporting every hit point with its capsule's rigid motion
and reprojecting it, with an exact ray-cast depth test for occlusion.

Camera frame: +x right, +y down, +z forward. The walker figure is modelled in a
world frame with +y up.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .config import PathLike, parallel_map
from .errors import ConfigError, SceneError
from .grids import (
    FrameSample,
    Intrinsics,
    ScalarGrid,
    SequenceManifest,
    VectorGrid,
    write_sequence,
)

logger = logging.getLogger(__name__)

# Transported points must match the re-rendered surface within this (meters)
OCCLUSION_THRESHOLD = 1e-4
MAX_FRAMES = 500

_T_EPS = 1e-9
# Reprojections this far (pixels) past the image border still count as in view
_VIEW_TOLERANCE = 1e-6
_DEGENERATE_LENGTH = 1e-12

Vec3 = Tuple[float, float, float]


# ---------------------------------------------------------------------------
# Geometry types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """x -> R x + t with R stored as a unit quaternion in (x, y, z, w) order."""

    quat: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        q = np.array(self.quat, dtype=np.float64).reshape(4)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if abs(float(np.linalg.norm(q)) - 1.0) > 1e-9:
            raise SceneError(f"Quaternion must be unit length, got norm {np.linalg.norm(q)}")
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "quat", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(3))

    @classmethod
    def from_rotation(
        cls, rotation: Rotation, translation: Any = (0.0, 0.0, 0.0)
    ) -> "RigidTransform":
        return cls(rotation.as_quat(), np.asarray(translation, dtype=np.float64))

    @classmethod
    def about_pivot(cls, rotation: Rotation, pivot: Any) -> "RigidTransform":
        """Rotation about a fixed point: x -> R (x - p) + p."""
        p = np.asarray(pivot, dtype=np.float64)
        return cls.from_rotation(rotation, p - rotation.apply(p))

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_quat(self.quat)

    @property
    def matrix(self) -> np.ndarray:
        return self.rotation.as_matrix()

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (..., 3) points."""
        return np.asarray(points, dtype=np.float64) @ self.matrix.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other."""
        return RigidTransform.from_rotation(
            self.rotation * other.rotation,
            self.rotation.apply(other.translation) + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        inv = self.rotation.inv()
        return RigidTransform.from_rotation(inv, -inv.apply(self.translation))

    def to_dict(self) -> Dict[str, List[float]]:
        return {"quat_xyzw": self.quat.tolist(), "translation": self.translation.tolist()}


@dataclass(frozen=True)
class Capsule:
    """Segment a-b swept by a sphere of ``radius``; a == b is a sphere."""

    a: Vec3
    b: Vec3
    radius: float
    part_id: int
    name: str = ""

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise SceneError(f"Capsule radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class FigurePose:
    """Local-to-world transform of every capsule at one frame."""

    transforms: Tuple[RigidTransform, ...]


def look_at(eye: Any, target: Any, up: Any = (0.0, 1.0, 0.0)) -> RigidTransform:
    """
    World-to-camera transform of a camera at ``eye`` looking at ``target``.

    Image y points along -up projected onto the image plane; x = y cross z.
    """
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    up = np.asarray(up, dtype=np.float64)
    y = -up + np.dot(up, z) * z
    norm = np.linalg.norm(y)
    if norm < 1e-9:
        raise SceneError("View direction is parallel to the up vector")
    y /= norm
    x = np.cross(y, z)
    rotation = Rotation.from_matrix(np.stack([x, y, z]))
    return RigidTransform.from_rotation(rotation, -rotation.apply(eye))


@dataclass(frozen=True)
class CameraSpec:
    """Pinhole camera with its world-to-camera pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise SceneError(f"Focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise SceneError(f"Principal point ({self.cx}, {self.cy}) outside the image")

    @classmethod
    def centered(
        cls, width: int, height: int, fx: float, fy: Optional[float] = None, **kwargs: Any
    ) -> "CameraSpec":
        """Camera with the principal point at the image center."""
        return cls(
            fx=fx,
            fy=fy if fy is not None else fx,
            cx=(width - 1) / 2.0,
            cy=(height - 1) / 2.0,
            width=width,
            height=height,
            **kwargs,
        )

    @property
    def intrinsics(self) -> Intrinsics:
        return Intrinsics(fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy)

    def rays(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Ray directions ((x - cx)/fx, (y - cy)/fy, 1); the ray parameter equals z-depth."""
        return np.stack(
            [(xs - self.cx) / self.fx, (ys - self.cy) / self.fy, np.ones_like(xs)], axis=-1
        )

    def pixel_rays(self) -> np.ndarray:
        """(H, W, 3) rays through every pixel center."""
        ys, xs = np.mgrid[0 : self.height, 0 : self.width].astype(np.float64)
        return self.rays(xs, ys)

    def project(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Camera-frame points to (x, y, z); x and y are NaN where z <= 0."""
        z = points[..., 2]
        front = z > _T_EPS
        safe = np.where(front, z, 1.0)
        x = np.where(front, self.fx * points[..., 0] / safe + self.cx, np.nan)
        y = np.where(front, self.fy * points[..., 1] / safe + self.cy, np.nan)
        return x, y, z

    def in_view(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Inside [0, W-1] x [0, H-1] up to rounding (NaN is outside)."""
        tol = _VIEW_TOLERANCE
        with np.errstate(invalid="ignore"):
            return (
                (x >= -tol)
                & (x <= self.width - 1 + tol)
                & (y >= -tol)
                & (y <= self.height - 1 + tol)
            )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "world_to_camera": self.world_to_camera.to_dict(),
        }


@dataclass(frozen=True)
class SceneSpec:
    """Capsules, their per-frame poses and the per-frame camera."""

    capsules: Tuple[Capsule, ...]
    poses: Tuple[FigurePose, ...]
    cameras: Tuple[CameraSpec, ...]
    rng_seed: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if len(self.poses) < 1 or len(self.poses) != len(self.cameras):
            raise SceneError(
                f"Scene needs >= 1 frame with one pose and camera each, "
                f"got {len(self.poses)} poses and {len(self.cameras)} cameras"
            )
        for k, pose in enumerate(self.poses):
            if len(pose.transforms) != len(self.capsules):
                raise SceneError(
                    f"Frame {k} has {len(pose.transforms)} transforms for "
                    f"{len(self.capsules)} capsules"
                )
        sizes = {(c.width, c.height) for c in self.cameras}
        if len(sizes) != 1:
            raise SceneError(f"All cameras must share one image size, got {sorted(sizes)}")

    @property
    def frame_count(self) -> int:
        return len(self.poses)

    @property
    def width(self) -> int:
        return self.cameras[0].width

    @property
    def height(self) -> int:
        return self.cameras[0].height

    @classmethod
    def static(
        cls, capsules: Sequence[Capsule], camera: CameraSpec, frame_count: int = 1
    ) -> "SceneSpec":
        """Scene whose capsules sit at their local coordinates in every frame."""
        pose = FigurePose(tuple(RigidTransform.identity() for _ in capsules))
        return cls(
            capsules=tuple(capsules),
            poses=(pose,) * frame_count,
            cameras=(camera,) * frame_count,
        )

    def object_to_camera(self, k: int) -> List[RigidTransform]:
        """Per-capsule local-to-camera transform at frame k."""
        w2c = self.cameras[k].world_to_camera
        return [w2c.compose(t) for t in self.poses[k].transforms]


# ---------------------------------------------------------------------------
# Ray casting
# ---------------------------------------------------------------------------


class _CameraCapsule(NamedTuple):
    a: np.ndarray
    b: np.ndarray
    radius: float


def _camera_capsules(scene: SceneSpec, k: int) -> List[_CameraCapsule]:
    out = []
    for capsule, transform in zip(scene.capsules, scene.object_to_camera(k)):
        ends = transform.apply(np.array([capsule.a, capsule.b], dtype=np.float64))
        out.append(_CameraCapsule(ends[0], ends[1], capsule.radius))
    return out


def _sphere_entry(dirs: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Nearest positive t with |t d - c| = r, inf on a miss."""
    a = np.einsum("ij,ij->i", dirs, dirs)
    b = dirs @ center
    c = float(center @ center) - radius * radius
    disc = b * b - a * c
    hit = disc >= 0.0
    t = (b - np.sqrt(np.where(hit, disc, 0.0))) / a
    return np.where(hit & (t > _T_EPS), t, np.inf)


def _cylinder_entry(dirs: np.ndarray, cap: _CameraCapsule) -> np.ndarray:
    """Nearest positive t on the finite cylinder side between the capsule ends."""
    axis = cap.b - cap.a
    length = float(np.linalg.norm(axis))
    u = axis / length
    du = dirs @ u
    d_perp = dirs - du[:, None] * u
    w = -cap.a
    w_perp = w - float(w @ u) * u
    a = np.einsum("ij,ij->i", d_perp, d_perp)
    b = d_perp @ w_perp
    c = float(w_perp @ w_perp) - cap.radius * cap.radius
    disc = b * b - a * c
    hit = (a > 0.0) & (disc >= 0.0)
    t = (-b - np.sqrt(np.where(hit, disc, 0.0))) / np.where(a > 0.0, a, 1.0)
    s = t * du - float(cap.a @ u)
    hit &= (s >= 0.0) & (s <= length) & (t > _T_EPS)
    return np.where(hit, t, np.inf)


def capsule_entry(dirs: np.ndarray, cap: _CameraCapsule) -> np.ndarray:
    """Nearest positive ray parameter of each (N, 3) ray from the origin into the capsule."""
    t = np.minimum(_sphere_entry(dirs, cap.a, cap.radius), _sphere_entry(dirs, cap.b, cap.radius))
    if np.linalg.norm(cap.b - cap.a) > _DEGENERATE_LENGTH:
        t = np.minimum(t, _cylinder_entry(dirs, cap))
    return t


def capsule_normal(points: np.ndarray, cap: _CameraCapsule) -> np.ndarray:
    """Outward unit normals at surface points: p minus its closest point on the axis segment."""
    axis = cap.b - cap.a
    length_sq = float(axis @ axis)
    if length_sq > _DEGENERATE_LENGTH**2:
        s = np.clip((points - cap.a) @ axis / length_sq, 0.0, 1.0)
        closest = cap.a + s[:, None] * axis
    else:
        closest = np.broadcast_to(cap.a, points.shape)
    n = points - closest
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def _cast(capsules: Sequence[_CameraCapsule], dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest hit t and capsule index (-1 on a miss) for (N, 3) rays."""
    best = np.full(dirs.shape[0], np.inf)
    ids = np.full(dirs.shape[0], -1, dtype=np.int64)
    for i, cap in enumerate(capsules):
        t = capsule_entry(dirs, cap)
        closer = t < best
        best[closer] = t[closer]
        ids[closer] = i
    return best, ids


@dataclass(frozen=True, eq=False)
class FrameRender:
    """One rendered frame: grids plus per-pixel capsule ids (-1 = background) and hit points."""

    depth: ScalarGrid
    normal: VectorGrid
    mask: ScalarGrid
    hit_ids: np.ndarray
    points: np.ndarray

    @property
    def sample(self) -> FrameSample:
        return FrameSample(depth=self.depth, normal=self.normal, mask=self.mask)

    @property
    def coverage(self) -> float:
        """Fraction of foreground pixels."""
        return float(np.mean(self.hit_ids >= 0))


def raycast_frame(scene: SceneSpec, frame_idx: int) -> FrameRender:
    """
    Render depth, normals and mask of one frame.

    Depth is the camera-space z of the nearest hit; background depth and
    normals are invalid and the mask is 0 there.
    """
    camera = scene.cameras[frame_idx]
    h, w = camera.height, camera.width
    dirs = camera.pixel_rays().reshape(-1, 3)
    capsules = _camera_capsules(scene, frame_idx)

    t, ids = _cast(capsules, dirs)
    hit = ids >= 0
    points = np.zeros_like(dirs)
    points[hit] = t[hit, None] * dirs[hit]
    normals = np.zeros_like(dirs)
    for i in np.unique(ids[hit]):
        sel = ids == i
        normals[sel] = capsule_normal(points[sel], capsules[i])

    hit2d = hit.reshape(h, w)
    return FrameRender(
        depth=ScalarGrid(np.where(hit, t, 0.0).reshape(h, w), hit2d),
        normal=VectorGrid(normals.reshape(h, w, 3), hit2d),
        mask=ScalarGrid.from_array(hit2d.astype(np.float64)),
        hit_ids=ids.reshape(h, w),
        points=points.reshape(h, w, 3),
    )


# ---------------------------------------------------------------------------
# Transport and flow
# ---------------------------------------------------------------------------


class Transport(NamedTuple):
    """Frame-k pixels carried to the target frame."""

    x: np.ndarray
    y: np.ndarray
    depth: np.ndarray
    hit: np.ndarray
    in_view: np.ndarray
    visible: np.ndarray


def transport_frame(
    scene: SceneSpec,
    k: int,
    target: int,
    render: Optional[FrameRender] = None,
    occlusion_threshold: float = OCCLUSION_THRESHOLD,
) -> Transport:
    """
    Carry every pixel of frame k into frame ``target``.

    Foreground pixels move their hit point with the hit capsule's rigid motion
    and reproject it; they are ``visible`` when a ray cast through the
    reprojected subpixel position in the target frame meets a surface at the
    transported depth within ``occlusion_threshold``. Background pixels are
    treated as points at infinity, so only the camera rotation moves them; they
    are visible whenever they land in view.
    """
    render = render if render is not None else raycast_frame(scene, k)
    cam_k, cam_t = scene.cameras[k], scene.cameras[target]
    hit = render.hit_ids >= 0
    moved = np.zeros_like(render.points)

    relative = [
        after.compose(before.inverse())
        for before, after in zip(scene.object_to_camera(k), scene.object_to_camera(target))
    ]
    for i in np.unique(render.hit_ids[hit]):
        sel = render.hit_ids == i
        moved[sel] = relative[i].apply(render.points[sel])

    # Background: direction only, rotated from camera k into the target camera
    rotation = cam_t.world_to_camera.rotation * cam_k.world_to_camera.rotation.inv()
    directions = rotation.apply(cam_k.pixel_rays().reshape(-1, 3)).reshape(moved.shape)
    moved[~hit] = directions[~hit]

    x, y, z = cam_t.project(moved)
    in_view = cam_t.in_view(x, y)
    x = np.where(in_view, np.clip(x, 0.0, cam_t.width - 1), x)
    y = np.where(in_view, np.clip(y, 0.0, cam_t.height - 1), y)

    visible = ~hit & in_view
    check = hit & in_view
    if check.any():
        t, ids = _cast(_camera_capsules(scene, target), cam_t.rays(x[check], y[check]))
        visible[check] = (ids >= 0) & (np.abs(t - z[check]) <= occlusion_threshold)

    depth = np.where(hit, z, np.inf)
    return Transport(x=x, y=y, depth=depth, hit=hit, in_view=in_view, visible=visible)


def _flow_from_transport(transport: Transport) -> Tuple[VectorGrid, ScalarGrid]:
    h, w = transport.hit.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    with np.errstate(invalid="ignore"):
        flow = np.stack([transport.x - xs, transport.y - ys], axis=-1)
    valid = transport.visible
    occluded = transport.hit & transport.in_view & ~transport.visible
    return (
        VectorGrid(np.where(valid[..., None], flow, 0.0), valid),
        ScalarGrid.from_array(occluded.astype(np.float64)),
    )


class AnalyticFlow(NamedTuple):
    """Forward (k -> k+1) and backward (k+1 -> k) flow with their occlusion maps."""

    forward: VectorGrid
    backward: VectorGrid
    occlusion: ScalarGrid
    backward_occlusion: ScalarGrid


def analytic_flow(
    scene: SceneSpec,
    k: int,
    renders: Optional[Tuple[FrameRender, FrameRender]] = None,
    occlusion_threshold: float = OCCLUSION_THRESHOLD,
) -> AnalyticFlow:
    """
    Exact flow between frames k and k+1 in both directions.

    Flow is reprojection minus pixel position. Foreground pixels failing the
    depth test are marked occluded and invalid; pixels leaving the view are
    invalid.
    """
    if not 0 <= k < scene.frame_count - 1:
        raise IndexError(f"No frame pair ({k}, {k + 1}) in a {scene.frame_count}-frame scene")
    r0, r1 = renders if renders is not None else (None, None)
    fwd, occ = _flow_from_transport(transport_frame(scene, k, k + 1, r0, occlusion_threshold))
    bwd, bocc = _flow_from_transport(transport_frame(scene, k + 1, k, r1, occlusion_threshold))
    return AnalyticFlow(forward=fwd, backward=bwd, occlusion=occ, backward_occlusion=bocc)


def generate_sequence(
    scene: SceneSpec, out_dir: PathLike, workers: Optional[int] = None
) -> SequenceManifest:
    """
    Render every frame and flow pair of a scene and write them with a manifest.

    Output is a pure function of the scene: same scene, same bytes.
    """
    n = scene.frame_count
    renders = parallel_map(lambda k: raycast_frame(scene, k), range(n), workers)
    logger.info("Rendered %d frames at %dx%d", n, scene.width, scene.height)
    flows = parallel_map(
        lambda k: analytic_flow(scene, k, (renders[k], renders[k + 1])), range(n - 1), workers
    )

    metadata = dict(scene.metadata)
    metadata.update(
        generator="densecheck.synth",
        rng_seed=scene.rng_seed,
        coverage=[r.coverage for r in renders],
    )
    return write_sequence(
        Path(out_dir),
        [r.sample for r in renders],
        [c.intrinsics for c in scene.cameras],
        [(f.forward, f.backward) for f in flows],
        metadata=metadata,
    )


# ---------------------------------------------------------------------------
# Walker
# ---------------------------------------------------------------------------

# Look-at height and visible vertical extent (meters) per framing
FRAMINGS: Dict[str, Tuple[float, float]] = {
    "full": (0.915, 1.85),
    "upper": (1.35, 0.9),
    "face": (1.66, 0.4),
}

# Joint (mean, amplitude) in degrees; all swings turn about the viewing axis
JOINT_SWINGS: Dict[str, Tuple[float, float]] = {
    "shoulder": (30.0, 8.0),
    "elbow": (10.0, 5.0),
    "hip": (8.0, 4.0),
    "knee": (3.0, 2.0),
}


@dataclass(frozen=True)
class WalkerConfig:
    """
    Walker generation parameters.

    Focal length is drawn once per sequence as a multiple of the image width.
    ``sway_fraction`` is the amplitude of the figure's side-to-side sway as a
    fraction of the image width; the camera does not follow the sway, so it is
    what moves the figure across the image. ``motion_scale`` scales every
    time-dependent motion; 0 gives a static figure and camera.
    """

    width: int = 128
    height: int = 128
    focal_range: Tuple[float, float] = (0.8, 1.5)
    framing: str = "full"
    fill: float = 0.75
    motion_scale: float = 1.0
    swing_period_range: Tuple[float, float] = (240.0, 360.0)
    sway_fraction: float = 0.12
    sway_period_range: Tuple[float, float] = (20.0, 32.0)
    orbit_start_deg: float = 2.0
    orbit_rate_range: Tuple[float, float] = (0.01, 0.04)
    walk_speed: float = 0.004

    def __post_init__(self) -> None:
        if self.framing not in FRAMINGS:
            raise ConfigError(
                f"Unknown framing '{self.framing}' (choose from {', '.join(FRAMINGS)})"
            )
        if self.width < 3 or self.height < 3:
            raise ConfigError(f"Image must be at least 3x3, got {self.width}x{self.height}")
        ranges = ("focal_range", "swing_period_range", "sway_period_range", "orbit_rate_range")
        for name in ranges:
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"{name} must satisfy 0 < low <= high, got {(lo, hi)}")
        if not 0 < self.fill <= 1:
            raise ConfigError(f"fill must be in (0, 1], got {self.fill}")
        if not 0 <= self.sway_fraction < 1 / 6:
            raise ConfigError(f"sway_fraction must be in [0, 1/6), got {self.sway_fraction}")
        if self.motion_scale < 0 or self.orbit_start_deg < 0 or self.walk_speed < 0:
            raise ConfigError("motion_scale, orbit_start_deg and walk_speed must be >= 0")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _walker_capsules() -> Tuple[Capsule, ...]:
    """Rest pose: torso, head, pelvis and two-segment limbs (11 capsules), meters, y up."""
    parts: List[Tuple[str, Vec3, Vec3, float]] = [
        ("torso", (0.0, 0.95, 0.0), (0.0, 1.40, 0.0), 0.17),
        ("head", (0.0, 1.62, 0.0), (0.0, 1.70, 0.0), 0.11),
        ("pelvis", (-0.10, 0.92, 0.0), (0.10, 0.92, 0.0), 0.12),
    ]
    for side, sign in (("right", 1.0), ("left", -1.0)):
        sx = 0.20 * sign
        hx = 0.10 * sign
        parts += [
            (f"{side}_upper_arm", (sx, 1.38, 0.0), (sx, 1.08, 0.0), 0.055),
            (f"{side}_forearm", (sx, 1.08, 0.0), (sx, 0.80, 0.0), 0.045),
            (f"{side}_thigh", (hx, 0.92, 0.0), (hx, 0.50, 0.0), 0.08),
            (f"{side}_shin", (hx, 0.50, 0.0), (hx, 0.08, 0.0), 0.06),
        ]
    return tuple(Capsule(a, b, r, part_id=i, name=name) for i, (name, a, b, r) in enumerate(parts))


def _swing(axis_angle_deg: float) -> Rotation:
    return Rotation.from_rotvec([0.0, 0.0, math.radians(axis_angle_deg)])


def _walker_pose(
    capsules: Sequence[Capsule], angles: Dict[Tuple[str, str], float], root: RigidTransform
) -> FigurePose:
    by_name = {c.name: c for c in capsules}
    transforms: Dict[str, RigidTransform] = {
        "torso": root,
        "head": root,
        "pelvis": root,
    }
    for side, sign in (("right", 1.0), ("left", -1.0)):
        upper = by_name[f"{side}_upper_arm"]
        thigh = by_name[f"{side}_thigh"]
        shoulder = RigidTransform.about_pivot(
            _swing(sign * angles[(side, "shoulder")]), upper.a
        )
        elbow = RigidTransform.about_pivot(_swing(sign * angles[(side, "elbow")]), upper.b)
        hip = RigidTransform.about_pivot(_swing(sign * angles[(side, "hip")]), thigh.a)
        knee = RigidTransform.about_pivot(_swing(sign * angles[(side, "knee")]), thigh.b)
        transforms[f"{side}_upper_arm"] = root.compose(shoulder)
        transforms[f"{side}_forearm"] = root.compose(shoulder).compose(elbow)
        transforms[f"{side}_thigh"] = root.compose(hip)
        transforms[f"{side}_shin"] = root.compose(hip).compose(knee)
    return FigurePose(tuple(transforms[c.name] for c in capsules))


def make_walker(seed: int, frame_count: int, config: Optional[WalkerConfig] = None) -> SceneSpec:
    """
    Procedural jumping-jack figure under a tracking, slowly orbiting camera.

    Joints swing sinusoidally about axes parallel to the initial viewing
    direction with per-side random phases. The figure drifts along x and the
    camera follows it, always looking at the framing's look-at point. On top
    of the drift the figure sways along the camera's right axis by up to
    ``sway_fraction`` of the image width; the sway is a translation in the
    image plane, so depth and normals of a point are unchanged by it. The
    focal length, swing period, phases, orbit and sway are drawn from ``seed``.

    Raises:
        ConfigError: frame_count outside [1, 500]
    """
    config = config or WalkerConfig()
    if not 1 <= frame_count <= MAX_FRAMES:
        raise ConfigError(f"frame_count must be in [1, {MAX_FRAMES}], got {frame_count}")

    rng = np.random.default_rng(seed)
    fx = float(rng.uniform(*config.focal_range)) * config.width
    period = float(rng.uniform(*config.swing_period_range))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=(2, len(JOINT_SWINGS)))
    theta0 = float(rng.uniform(-config.orbit_start_deg, config.orbit_start_deg))
    rate = float(rng.uniform(*config.orbit_rate_range)) * float(rng.choice([-1.0, 1.0]))
    sway_period = float(rng.uniform(*config.sway_period_range))
    sway_phase = float(rng.uniform(0.0, 2.0 * math.pi))

    look_y, extent = FRAMINGS[config.framing]
    distance = fx * extent / (config.fill * config.height)
    sway_amplitude = config.sway_fraction * config.width * distance / fx
    capsules = _walker_capsules()
    omega = 2.0 * math.pi / period
    ms = config.motion_scale

    poses = []
    cameras = []
    for k in range(frame_count):
        angles = {}
        for s, side in enumerate(("right", "left")):
            for j, (joint, (mean, amp)) in enumerate(JOINT_SWINGS.items()):
                angles[(side, joint)] = mean + amp * math.sin(omega * ms * k + phases[s, j])
        offset = np.array([config.walk_speed * ms * k, 0.0, 0.0])
        theta = math.radians(theta0 + rate * ms * k)
        right = np.array([math.cos(theta), 0.0, -math.sin(theta)])
        sway = sway_amplitude * math.sin(2.0 * math.pi * ms * k / sway_period + sway_phase)
        root = RigidTransform.from_rotation(Rotation.identity(), offset + sway * right)
        poses.append(_walker_pose(capsules, angles, root))

        target = offset + np.array([0.0, look_y, 0.0])
        eye = target + distance * np.array([math.sin(theta), 0.0, math.cos(theta)])
        cameras.append(
            CameraSpec.centered(
                config.width, config.height, fx, world_to_camera=look_at(eye, target)
            )
        )

    metadata = {
        "figure": "walker",
        "seed": seed,
        "frame_count": frame_count,
        "focal_px": fx,
        "swing_period_frames": period,
        "orbit_start_deg": theta0,
        "orbit_rate_deg_per_frame": rate,
        "sway_period_frames": sway_period,
        "sway_amplitude_m": sway_amplitude,
        "camera_distance_m": distance,
        "config": config.to_dict(),
    }
    logger.debug("Walker seed=%d fx=%.2f period=%.1f orbit=%.3f deg/frame", seed, fx, period, rate)
    return SceneSpec(
        capsules=capsules,
        poses=tuple(poses),
        cameras=tuple(cameras),
        rng_seed=seed,
        metadata=metadata,
    )
