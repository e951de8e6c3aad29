from collections import OrderedDict
from typing import Dict, Literal, Tuple

import numpy as np

from sa_reid.exceptions import CheckpointError
from sa_reid.model.model_config import ModelConfig
from sa_reid.numerics import Tensor

Params = Dict[str, Tensor]


def parameter_shapes(cfg: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Names and shapes of every trainable tensor, in initialisation order."""
    shapes = OrderedDict()
    in_channels = cfg.input_shape[0]
    for index, stage in enumerate(cfg.stages, start=1):
        shapes[f"stage{index}.conv.weight"] = (stage.out_channels, in_channels, stage.kernel, stage.kernel)
        shapes[f"stage{index}.conv.bias"] = (stage.out_channels,)
        in_channels = stage.out_channels

    for index, stage in enumerate(cfg.stages[:-1], start=1):
        shapes[f"ds{index}.fc.weight"] = (cfg.num_classes, stage.out_channels)
        shapes[f"ds{index}.fc.bias"] = (cfg.num_classes,)

    # the 1x1 reduction is shared by all stripes, the part classifiers are independent
    shapes["reduce.weight"] = (cfg.reduced_dim, in_channels)
    shapes["reduce.bias"] = (cfg.reduced_dim,)
    for part in range(1, cfg.m + 1):
        shapes[f"part{part}.fc.weight"] = (cfg.num_classes, cfg.reduced_dim)
        shapes[f"part{part}.fc.bias"] = (cfg.num_classes,)

    shapes["main.fc.weight"] = (cfg.num_classes, cfg.reduced_dim)
    shapes["main.fc.bias"] = (cfg.num_classes,)
    return shapes


def kaiming_bound(shape: Tuple[int, ...], nonlinearity: Literal["relu", "linear"] = "relu") -> float:
    """Half-width of the Kaiming-uniform distribution, sqrt(3 * gain**2 / fan_in).

    gain**2 is 2 for a layer followed by a ReLU and 1 otherwise.
    """
    fan_in = int(np.prod(shape[1:]))
    gain_squared = 2.0 if nonlinearity == "relu" else 1.0
    return float(np.sqrt(3.0 * gain_squared / fan_in))


def init_params(cfg: ModelConfig) -> Params:
    """
    Initialise every parameter deterministically from ``cfg.seed``.

    Weights are drawn Kaiming-uniform with fan-in scaling, biases are zero. Convolutions feed a ReLU and use
    the ReLU gain; the fully-connected layers feed no nonlinearity and use the linear gain.
    """
    rng = np.random.default_rng(cfg.seed)
    params = OrderedDict()
    for name, shape in parameter_shapes(cfg).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
        else:
            nonlinearity = "relu" if name.startswith("stage") else "linear"
            bound = kaiming_bound(shape, nonlinearity=nonlinearity)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def zeros_like_params(params: Params) -> Params:
    return OrderedDict((name, np.zeros_like(value)) for name, value in params.items())


def check_params(params: Params, cfg: ModelConfig) -> None:
    """Raise when ``params`` does not hold exactly the tensors ``cfg`` describes."""
    expected = parameter_shapes(cfg)
    if set(params) != set(expected):
        difference = sorted(set(params) ^ set(expected))
        raise CheckpointError(f"The parameters do not match the model configuration, differing names: {difference}.")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise CheckpointError(
                f"Parameter '{name}' has shape {params[name].shape}, the model configuration expects {shape}."
            )
