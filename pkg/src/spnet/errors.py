"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not match what an operation requires."""


class CacheError(ValueError):
    """A backward pass was given a cache from a different forward pass."""


class CheckpointError(ValueError):
    """Checkpoint file is corrupt or structurally invalid."""


class UnsupportedVersionError(CheckpointError):
    """Checkpoint was written by an unknown format version."""


class DataFormatError(ValueError):
    """An input data file does not conform to its declared format."""


class ConfigError(ValueError):
    """Experiment configuration is invalid or incomplete."""
