"""Exceptions raised across the package, all of them ``ValueError`` subclasses."""


class SaReidError(ValueError):
    """Base class for every error raised by sa_reid."""


class DimensionError(SaReidError):
    """Operand shapes do not agree."""


class ConfigurationError(SaReidError):
    """A configuration value violates the invariants of the module that owns it."""


class ContractError(SaReidError):
    """A layer tape or a forward record was used outside of its contract."""


class ParseError(SaReidError):
    """A file on disk does not follow the expected format or naming contract."""


class CheckpointError(SaReidError):
    """A checkpoint file is corrupt, truncated or of an unsupported version."""


class TrainingDivergedError(SaReidError):
    """The training loss became NaN or infinite."""


class GradientCheckError(SaReidError):
    """An analytic gradient disagrees with its finite-difference estimate."""


class NonFiniteError(SaReidError):
    """An operand holds NaN or infinite values."""
