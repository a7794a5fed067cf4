"""Small builders shared by the tests."""

from typing import Optional

import numpy as np

from densecheck.grids import FrameSample, ScalarGrid, VectorGrid


def scalar(values, valid=None) -> ScalarGrid:
    """ScalarGrid from a nested list or array."""
    return ScalarGrid.from_array(np.asarray(values, dtype=np.float64), valid)


def constant_normals(vector, height: int, width: int) -> VectorGrid:
    """Field of one unit vector everywhere."""
    v = np.asarray(vector, dtype=np.float64)
    v = v / np.linalg.norm(v)
    return VectorGrid.from_array(np.broadcast_to(v, (height, width, 3)).copy())


def random_normals(rng: np.random.Generator, height: int, width: int) -> VectorGrid:
    """Random unit normals facing the camera (z < 0)."""
    n = rng.normal(size=(height, width, 3))
    n[..., 2] = -np.abs(n[..., 2]) - 0.5
    n /= np.linalg.norm(n, axis=2, keepdims=True)
    return VectorGrid.from_array(n)


def zero_flow(height: int, width: int) -> VectorGrid:
    return VectorGrid.from_array(np.zeros((height, width, 2)))


def uniform_flow(u: float, v: float, height: int, width: int) -> VectorGrid:
    return VectorGrid.from_array(np.broadcast_to([u, v], (height, width, 2)).copy())


def frame(depth, normal: VectorGrid, mask: Optional[np.ndarray] = None) -> FrameSample:
    """FrameSample with a full mask unless one is given."""
    depth = np.asarray(depth, dtype=np.float64)
    if mask is None:
        mask = np.ones_like(depth)
    return FrameSample(scalar(depth), normal, scalar(mask))
