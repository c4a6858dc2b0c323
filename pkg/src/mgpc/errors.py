"""Exception types shared across the package."""


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed.

    Carries the 1-based line number at which parsing failed, when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MeshValidationError(ValueError):
    """Raised when a parsed mesh violates a structural requirement."""


class DegenerateGeometryError(ValueError):
    """Raised when geometry is too degenerate to operate on."""


class DisconnectedMeshError(ValueError):
    """Raised when vertices are unreachable from a geodesic source."""


class NumericalError(RuntimeError):
    """Raised when a numerical routine fails to produce a usable result."""


class CalibrationError(RuntimeError):
    """Raised when an iterative calibration cannot reach its target."""


class MetricUndefinedError(ValueError):
    """Raised when a score is undefined for the given label configuration."""
