"""Exception types shared across the package."""


class GaprecError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GaprecError):
    """A configuration key, value, or file is invalid."""


class DataError(GaprecError):
    """Raw events, session files, or vocabulary files are malformed."""


class ShapeError(GaprecError):
    """A tensor argument has the wrong shape or dtype for an operation."""


class CheckpointError(GaprecError):
    """A checkpoint file is missing, corrupt, or inconsistent with its config."""


class TrainingDiverged(GaprecError):
    """Training produced a non-finite loss; carries step diagnostics."""
