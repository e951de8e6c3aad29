from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from sa_reid.exceptions import ContractError, DimensionError

Tensor = np.ndarray


def as_tensor(values, ndim: int = None, name: str = "tensor") -> Tensor:
    """
    Convert ``values`` to a float64 array and optionally check its rank.

    Parameters
    ----------
    values : array_like
        The values to convert.
    ndim : int, optional
        The expected number of dimensions. If None, any rank is accepted.
    name : str, default: "tensor"
        The name used in error messages.
    """
    tensor = np.asarray(values, dtype=np.float64)
    if ndim is not None and tensor.ndim != ndim:
        raise DimensionError(f"Expected '{name}' to have rank {ndim}, got shape {tensor.shape}.")
    return tensor


@dataclass
class LayerTape:
    """Forward state cached by a layer so that its backward pass can be computed exactly.

    A tape is consumed by exactly one backward call, with a gradient shaped like the forward output.
    """

    kind: str
    cache: dict
    output_shape: Tuple[int, ...]
    consumed: bool = field(default=False, compare=False)

    def consume(self, kind: str, grad_shape: Tuple[int, ...]) -> dict:
        if self.kind != kind:
            raise ContractError(f"Expected a '{kind}' tape, got a '{self.kind}' tape.")
        if self.consumed:
            raise ContractError(f"The '{self.kind}' tape has already been consumed by a backward call.")
        if tuple(grad_shape) != tuple(self.output_shape):
            raise DimensionError(
                f"Gradient of shape {tuple(grad_shape)} does not match the '{self.kind}' forward output "
                f"shape {tuple(self.output_shape)}."
            )
        self.consumed = True
        return self.cache
