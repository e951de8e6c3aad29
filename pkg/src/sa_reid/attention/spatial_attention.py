"""Parameter-free spatial attention: a softmax over the channel-summed activations re-weights every
spatial position of a feature map. The layer has no trainable parameters."""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from sa_reid.exceptions import ConfigurationError, NonFiniteError
from sa_reid.numerics import LayerTape, Tensor, as_tensor, softmax

MAX_JACOBIAN_SIDE = 4096


@dataclass(frozen=True)
class AttentionMap:
    """
    Per-position attention weights of a feature map.

    Attributes
    ----------
    p : Tensor
        Weights of shape (H, W), strictly positive and summing to one.
    channel_sums : Tensor
        The channel sums A(i, j) the softmax was taken over, kept for diagnostics.
    """

    p: Tensor
    channel_sums: Tensor


def sa_forward(f: Tensor) -> Tuple[Tensor, AttentionMap, LayerTape]:
    """
    Apply the spatial attention layer to a feature map.

    Parameters
    ----------
    f : Tensor
        Feature map of shape (C, H, W).

    Returns
    -------
    output : Tensor
        ``F_k(i, j) = f_k(i, j) * p(i, j)``, same shape as ``f``.
    attention : AttentionMap
    tape : LayerTape
    """
    f = as_tensor(f, ndim=3, name="f")
    if not np.all(np.isfinite(f)):
        raise NonFiniteError("The spatial attention input contains NaN or infinite values.")
    _, height, width = f.shape
    channel_sums = f.sum(axis=0)
    p = softmax(channel_sums.ravel()).reshape(height, width)
    output = f * p[np.newaxis]
    tape = LayerTape(kind="sa", cache=dict(f=f, p=p), output_shape=output.shape)
    return output, AttentionMap(p=p, channel_sums=channel_sums), tape


def sa_backward(tape: LayerTape, grad_out: Tensor) -> Tensor:
    """
    Closed-form gradient of the spatial attention layer with respect to its input.

    Contracting the three Jacobian cases (same activation, same position on another channel, other
    positions) with ``grad_out`` reduces to

        grad_f = p * grad_out + p * (q - sum(q * p))

    where ``q(i, j) = sum_k grad_out_k(i, j) * f_k(i, j)``, broadcast over channels.
    """
    grad_out = as_tensor(grad_out, ndim=3, name="grad_out")
    cache = tape.consume(kind="sa", grad_shape=grad_out.shape)
    f, p = cache["f"], cache["p"]
    q = (grad_out * f).sum(axis=0)
    weighted_total = (q * p).sum()
    return p[np.newaxis] * grad_out + (p * (q - weighted_total))[np.newaxis]


def sa_jacobian(f: Tensor) -> Tensor:
    """
    Dense Jacobian of the spatial attention layer.

    Entry [(k, i, j), (t, m, n)] holds dF_k(i, j) / df_t(m, n):

    - ``f_k(i,j) p(i,j) (1 - p(i,j)) + p(i,j)`` when (k, i, j) == (t, m, n)
    - ``f_k(i,j) p(i,j) (1 - p(i,j))`` when k != t at the same position
    - ``-f_k(i,j) p(i,j) p(m,n)`` at any other position

    Parameters
    ----------
    f : Tensor
        Feature map of shape (C, H, W) with C * H * W <= 4096.

    Returns
    -------
    Tensor
        Array of shape (C*H*W, C*H*W), rows indexed by output and columns by input in C-order.
    """
    f = as_tensor(f, ndim=3, name="f")
    num_channels, height, width = f.shape
    side = f.size
    if side > MAX_JACOBIAN_SIDE:
        raise ConfigurationError(
            f"A dense Jacobian of side {side} exceeds the limit of {MAX_JACOBIAN_SIDE} entries per side."
        )
    _, attention, _ = sa_forward(f)
    num_positions = height * width
    p = attention.p.ravel()
    activations = f.reshape(num_channels, num_positions)

    cross_position = -np.einsum("ka,a,b->kab", activations, p, p)
    jacobian = np.repeat(cross_position[:, :, np.newaxis, :], num_channels, axis=2)

    positions = np.arange(num_positions)
    same_position = (activations * p * (1.0 - p)).T  # (positions, channels)
    jacobian[:, positions, :, positions] = np.repeat(same_position[:, :, np.newaxis], num_channels, axis=2)

    channel_index, position_index = np.meshgrid(np.arange(num_channels), positions, indexing="ij")
    jacobian[channel_index, position_index, channel_index, position_index] += p[position_index]

    return jacobian.reshape(side, side)
