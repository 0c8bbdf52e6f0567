"""Exception types shared across the toolkit."""


class LesionSRError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(LesionSRError, ValueError):
    """Input data violates a precondition (non-finite pixels, bad values)."""


class ShapeError(LesionSRError, ValueError):
    """Array dimensions are incompatible with the requested operation."""


class AlignmentError(ShapeError):
    """Offsets or sizes are not divisible by the magnification factor."""


class NoLesionError(LesionSRError, ValueError):
    """Segmentation mask is empty; the slice is excluded from processing."""


class DataFormatError(LesionSRError, ValueError):
    """On-disk corpus or record files are malformed."""


class ConfigError(LesionSRError, ValueError):
    """Configuration values are inconsistent or out of range."""


class CapabilityError(LesionSRError, TypeError):
    """A model lacks a capability an operation requires (e.g. differentiability)."""


class TrainingDivergedError(LesionSRError, RuntimeError):
    """A loss became NaN/Inf; carries the step and term that diverged."""

    def __init__(self, step, term, value):
        self.step = step
        self.term = term
        self.value = value
        super().__init__(f"non-finite loss at step {step}: {term}={value}")
