"""Exception types raised across the package."""


class NasaSwinError(Exception):
    pass


class DimensionError(NasaSwinError, ValueError):
    """Operand shapes are incompatible."""


class ConfigurationError(NasaSwinError, ValueError):
    """A layer or model configuration violates a divisibility or fit rule."""


class IngestionError(NasaSwinError, IOError):
    """An input file (image, manifest, external denoised image) is missing or malformed."""


class CheckpointError(NasaSwinError, IOError):
    pass


class TrainingError(NasaSwinError, RuntimeError):
    pass
