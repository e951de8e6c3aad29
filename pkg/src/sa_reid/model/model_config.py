from dataclasses import dataclass, field
from typing import List, Tuple

from sa_reid.exceptions import ConfigurationError
from sa_reid.numerics import conv2d_output_size


@dataclass(frozen=True)
class StageConfig:
    """One backbone stage: conv(kernel, stride, pad) -> ReLU -> optional 2x2 average-pool downsample."""

    out_channels: int
    kernel: int = 3
    stride: int = 1
    pad: int = 1
    downsample: bool = True


def _default_stages() -> Tuple[StageConfig, ...]:
    return (
        StageConfig(out_channels=16),
        StageConfig(out_channels=32),
        StageConfig(out_channels=64),
        StageConfig(out_channels=128, downsample=False),
    )


@dataclass(frozen=True)
class ModelConfig:
    """
    Architecture of the staged backbone with deep-supervision branches and part classifiers.

    Attributes
    ----------
    stages : tuple of StageConfig
        Backbone stages; every stage but the last carries a deep-supervision branch.
    input_shape : tuple of int
        Input image shape (C, H, W).
    num_classes : int
        Number of training identities.
    m : int
        Number of horizontal stripes of the last feature map.
    reduced_dim : int
        Output size of the shared 1x1 reduction applied to every stripe.
    lam : float
        Weight of the deep-supervision and main losses; the part losses get 1 - lam.
    sa_on_ds : bool
        Spatial attention before GAP on the deep-supervision branches.
    sa_on_backbone : bool
        Spatial attention on the last feature map, before stripe pooling.
    seed : int
        Seed of the parameter initialisation.
    """

    stages: Tuple[StageConfig, ...] = field(default_factory=_default_stages)
    input_shape: Tuple[int, int, int] = (3, 64, 32)
    num_classes: int = 10
    m: int = 2
    reduced_dim: int = 32
    lam: float = 0.2
    sa_on_ds: bool = True
    sa_on_backbone: bool = False
    seed: int = 0

    def __post_init__(self):
        if len(self.stages) < 1:
            raise ConfigurationError("At least one backbone stage is required.")
        if len(self.input_shape) != 3 or any(size < 1 for size in self.input_shape):
            raise ConfigurationError(f"Invalid input shape {self.input_shape}, expected positive (C, H, W).")
        for name in ("num_classes", "m", "reduced_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"'{name}' must be positive, got {getattr(self, name)}.")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigurationError(f"'lam' must lie in [0, 1], got {self.lam}.")
        for stage in self.stages:
            if stage.out_channels < 1 or stage.kernel < 1 or stage.stride < 1 or stage.pad < 0:
                raise ConfigurationError(f"Invalid stage configuration {stage}.")
        final_height = self.stage_shapes()[-1][1]
        if self.m > final_height:
            raise ConfigurationError(
                f"Cannot partition the final feature map of height {final_height} into m={self.m} stripes."
            )

    @property
    def num_ds_branches(self) -> int:
        return len(self.stages) - 1

    @property
    def embedding_dim(self) -> int:
        return self.m * self.reduced_dim

    def stage_shapes(self) -> List[Tuple[int, int, int]]:
        """Output shape (C, H, W) of every backbone stage."""
        shapes = []
        _, height, width = self.input_shape
        for stage in self.stages:
            height = conv2d_output_size(height, stage.kernel, stage.stride, stage.pad)
            width = conv2d_output_size(width, stage.kernel, stage.stride, stage.pad)
            if stage.downsample:
                height, width = height // 2, width // 2
                if height == 0 or width == 0:
                    raise ConfigurationError(f"Stage {stage} downsamples the feature map to an empty map.")
            shapes.append((stage.out_channels, height, width))
        return shapes
