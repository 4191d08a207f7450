"""Exception types shared across the package."""


class NoValidPixelsError(ValueError):
    """An operation that needs at least one valid ground-truth pixel got none."""


class FormatError(ValueError):
    """An on-disk artifact does not match the documented layout."""


class ConfigError(ValueError):
    """Inconsistent or incomplete run configuration."""


class TrainingDivergedError(RuntimeError):
    """A training step produced a non-finite loss."""
