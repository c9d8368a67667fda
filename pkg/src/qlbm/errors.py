"""Exception types shared across the package."""


class QLBMError(Exception):
    """Base class for all package errors."""


class ConfigurationError(QLBMError):
    """Invalid lattice/run configuration: bad extents, mismatched shapes, unknown keys."""


class EncodingError(QLBMError):
    """A field cannot be amplitude-encoded (e.g. identically zero)."""


class CoefficientRangeError(QLBMError):
    """A collision/boundary coefficient left the unitary-combination range [-1, 1]."""


class PostSelectionError(QLBMError):
    """A post-selected branch carries (numerically) zero probability."""


class SimulationError(QLBMError):
    """A run diverged or failed mid-flight; carries the failing step when known."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step
