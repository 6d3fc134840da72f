"""Exception types shared across the pipeline."""


class SketchBetweenError(Exception):
    """Base class for all pipeline errors."""


class DecodeError(SketchBetweenError):
    """An animation file could not be read."""


class EmptyClipError(DecodeError):
    """A decoded animation contained zero frames."""


class ConfigurationError(SketchBetweenError):
    """Invalid configuration or corpus layout."""


class ParameterError(SketchBetweenError):
    """An operation received an out-of-range parameter."""


class CheckpointError(SketchBetweenError):
    """A checkpoint archive is missing, corrupt, or version-incompatible."""


class TrainingDivergedError(SketchBetweenError):
    """The training loss became non-finite."""
