from typing import List, Literal, Sequence, Tuple

import numpy as np

from sa_reid.exceptions import ConfigurationError
from sa_reid.numerics import LayerTape, Tensor, as_tensor

GapMode = Literal["mean", "sum"]


def gap_forward(f: Tensor, mode: GapMode = "mean") -> Tuple[Tensor, LayerTape]:
    """
    Global average pooling of a (C, H, W) map into a vector of length C.

    Parameters
    ----------
    f : Tensor
        Feature map of shape (C, H, W).
    mode : {'mean', 'sum'}, default: 'mean'
        'sum' is the literal sum over positions, 'mean' divides it by H * W.
    """
    f = as_tensor(f, ndim=3, name="f")
    if mode == "mean":
        pooled = f.mean(axis=(1, 2))
    elif mode == "sum":
        pooled = f.sum(axis=(1, 2))
    else:
        raise ConfigurationError(f"Unknown pooling mode '{mode}', expected 'mean' or 'sum'.")
    return pooled, LayerTape(kind="gap", cache=dict(input_shape=f.shape, mode=mode), output_shape=pooled.shape)


def gap_backward(tape: LayerTape, grad_pooled: Tensor) -> Tensor:
    grad_pooled = as_tensor(grad_pooled, ndim=1, name="grad_pooled")
    cache = tape.consume(kind="gap", grad_shape=grad_pooled.shape)
    num_channels, height, width = cache["input_shape"]
    scale = 1.0 / (height * width) if cache["mode"] == "mean" else 1.0
    return np.broadcast_to((grad_pooled * scale)[:, np.newaxis, np.newaxis], (num_channels, height, width)).copy()


def stripe_bounds(height: int, num_stripes: int) -> List[Tuple[int, int]]:
    """Row ranges [start, stop) of ``num_stripes`` horizontal stripes; stripe s starts at floor(s * H / m)."""
    if num_stripes < 1 or num_stripes > height:
        raise ConfigurationError(f"Cannot partition {height} rows into {num_stripes} stripes.")
    return [(s * height // num_stripes, (s + 1) * height // num_stripes) for s in range(num_stripes)]


def stripe_pool(f: Tensor, m: int) -> Tuple[List[Tensor], LayerTape]:
    """
    Part-level pooling: average each of ``m`` horizontal stripes of a (C, H, W) map.

    Returns
    -------
    parts : list of Tensor
        ``m`` vectors of length C, top stripe first.
    tape : LayerTape
    """
    f = as_tensor(f, ndim=3, name="f")
    bounds = stripe_bounds(f.shape[1], m)
    parts = [f[:, start:stop, :].mean(axis=(1, 2)) for start, stop in bounds]
    tape = LayerTape(
        kind="stripe_pool", cache=dict(input_shape=f.shape, bounds=bounds), output_shape=(m, f.shape[0])
    )
    return parts, tape


def stripe_pool_backward(tape: LayerTape, grad_parts: Sequence[Tensor]) -> Tensor:
    grad_parts = as_tensor(np.stack([np.asarray(grad) for grad in grad_parts]), ndim=2, name="grad_parts")
    cache = tape.consume(kind="stripe_pool", grad_shape=grad_parts.shape)
    _, _, width = cache["input_shape"]
    grad_f = np.zeros(cache["input_shape"])
    for grad_part, (start, stop) in zip(grad_parts, cache["bounds"]):
        grad_f[:, start:stop, :] = (grad_part / ((stop - start) * width))[:, np.newaxis, np.newaxis]
    return grad_f
