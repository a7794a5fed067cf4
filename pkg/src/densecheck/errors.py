"""
Exception hierarchy for densecheck.

Library code raises these; the CLI turns them into exit status 1.
"""


class DenseCheckError(Exception):
    """Base exception for densecheck errors."""

    pass


class GridFormatError(DenseCheckError):
    """Raised when a raster file (PFM, FLO, PNG) is malformed or truncated."""

    pass


class ShapeMismatchError(DenseCheckError):
    """Raised when grids or feature volumes have incompatible shapes."""

    pass


class EmptyMaskError(DenseCheckError):
    """Raised when an operation needs at least one pixel and the masked set is empty."""

    pass


class ConfigError(DenseCheckError):
    """Raised when a configuration document or value is invalid."""

    pass


class ManifestError(DenseCheckError):
    """Raised when a sequence manifest is missing, malformed or inconsistent."""

    pass


class SceneError(DenseCheckError):
    """Raised when a scene, camera, capsule or rigid transform is invalid."""

    pass


class NumericError(DenseCheckError):
    """Raised when inputs are non-finite or a numeric procedure cannot proceed."""

    pass
