"""Exception types shared across the toolkit."""


class StyleVCError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(StyleVCError):
    """An operation received data violating its preconditions."""


class InvalidConfigError(StyleVCError):
    """Configuration values are inconsistent or out of range."""


class CorpusValidationError(StyleVCError):
    """Manifest, inventory or alignment files failed validation."""


class AlignmentError(StyleVCError):
    """Duration alignment could not be reconciled with the features."""


class NoVoicedFramesError(StyleVCError):
    """F0 interpolation requires at least one voiced frame."""


class InfeasibleAlignmentError(StyleVCError):
    """Label sequence cannot be aligned to the encoded frames."""


class TrainingDivergedError(StyleVCError):
    """Training loss became non-finite."""
