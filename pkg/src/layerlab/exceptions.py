"""Exception hierarchy shared by all layerlab modules."""


class LayerLabError(Exception):
    """Base class for every error raised by layerlab."""


class GeometryError(LayerLabError, ValueError):
    pass


class InvalidCurveError(GeometryError):
    """The curve representation is degenerate, self-intersecting or clockwise."""


class OutOfTubeError(GeometryError):
    """A point lies inside the body or beyond the tubular radius guard."""


class NonUniqueProjectionError(GeometryError):
    """Two distinct boundary points are (numerically) equally close."""


class FocalError(GeometryError):
    """An offset distance reaches the focal set, i.e. ``1 + d*k <= 0``."""


class MeshError(LayerLabError):
    """Mesh construction failed or produced an element below the quality floor."""


class AssemblyError(LayerLabError):
    pass


class SolverError(LayerLabError):
    """The linear solve did not reach the requested relative residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(LayerLabError, ValueError):
    """Schema violation in an experiment configuration."""
