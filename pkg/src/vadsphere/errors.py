"""Exception hierarchy shared across the package."""


class VadSphereError(Exception):
    """Base class for all package errors."""


class DomainError(VadSphereError, ValueError):
    """A numeric input lies outside the domain of an operation."""


class ConfigurationError(VadSphereError, ValueError):
    """Invalid hyperparameters or inconsistent configuration."""


class ShapeError(VadSphereError, ValueError):
    """Array shapes do not match the expected contract."""


class FormatError(VadSphereError, ValueError):
    """A file does not follow the expected binary or text layout."""


class ValidationError(VadSphereError, ValueError):
    """Records in a manifest failed validation."""


class StateError(VadSphereError, RuntimeError):
    """An object was used in the wrong lifecycle state."""


class TrainingError(VadSphereError, RuntimeError):
    """Training could not continue (non-finite gradients, I/O failure)."""
