from .exceptions import (
    CheckpointError,
    ConfigurationError,
    ContractError,
    DimensionError,
    GradientCheckError,
    ParseError,
    SaReidError,
    TrainingDivergedError,
)
