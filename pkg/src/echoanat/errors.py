"""Exception types shared across the package."""


class EchoAnatError(Exception):
    """Base class for all package errors."""


class ParameterError(EchoAnatError, ValueError):
    """An argument is outside its documented domain."""


class RangeError(EchoAnatError, ValueError):
    """Pixel values fall outside the declared value range."""


class ShapeMismatchError(EchoAnatError, ValueError):
    """Two grids that must share a shape do not."""


class ImageIOError(EchoAnatError, IOError):
    """A file could not be decoded as an image."""


class LayoutError(EchoAnatError, ValueError):
    """A dataset directory does not follow the expected layout."""


class PhantomSpecError(EchoAnatError, ValueError):
    """A phantom specification is geometrically invalid."""


class SeedingError(EchoAnatError, ValueError):
    """A segmentation seed cannot be derived (e.g. empty mask)."""


class ModelStateError(EchoAnatError, RuntimeError):
    """A model bundle is not in a usable state for the request."""


class TrainingDivergedError(EchoAnatError, RuntimeError):
    """A training step produced a non-finite loss; carries the breakdown."""

    def __init__(self, message, components=None):
        super().__init__(message)
        self.components = dict(components or {})


class CheckpointError(EchoAnatError, RuntimeError):
    """Base class for checkpoint file problems."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version is not supported by this reader."""


class CheckpointChecksumError(CheckpointError):
    """Checkpoint payload is corrupt or truncated."""


class ConfigError(EchoAnatError, ValueError):
    """A run configuration is malformed (unknown key, bad value)."""


class ArtifactExistsError(EchoAnatError, RuntimeError):
    """A completed artifact would be overwritten without --force."""
