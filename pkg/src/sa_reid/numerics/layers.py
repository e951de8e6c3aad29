"""Differentiable primitive layers. Every forward returns its output together with a ``LayerTape``;
the matching backward consumes the tape."""
from typing import Tuple

import numpy as np

from sa_reid.exceptions import ConfigurationError, DimensionError
from sa_reid.numerics.tape import LayerTape, Tensor, as_tensor


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a [m x k] and b [k x n]."""
    a = as_tensor(a, ndim=2, name="a")
    b = as_tensor(b, ndim=2, name="b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"Cannot multiply shapes {a.shape} and {b.shape}: inner dimensions differ.")
    return a @ b


def softmax(values: Tensor) -> Tensor:
    """Softmax over all entries of ``values``, stabilised by subtracting the maximum."""
    values = as_tensor(values)
    shifted = values - values.max()
    exponentials = np.exp(shifted)
    return exponentials / exponentials.sum()


def conv2d_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    span = size + 2 * pad - kernel
    if span < 0 or span % stride != 0:
        raise ConfigurationError(
            f"Input size {size} with kernel {kernel}, stride {stride} and pad {pad} does not give an integral "
            f"positive output size."
        )
    return span // stride + 1


def _window(x_padded: Tensor, di: int, dj: int, stride: int, out_h: int, out_w: int) -> Tensor:
    return x_padded[:, di : di + stride * (out_h - 1) + 1 : stride, dj : dj + stride * (out_w - 1) + 1 : stride]


def conv2d_forward(
    x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1, pad: int = 0
) -> Tuple[Tensor, LayerTape]:
    """
    2-D cross-correlation (no kernel flip) of a C_in x H x W map with C_out kernels, plus bias.

    Parameters
    ----------
    x : Tensor
        Input feature map of shape (C_in, H, W).
    kernels : Tensor
        Kernels of shape (C_out, C_in, kh, kw).
    bias : Tensor
        Bias of shape (C_out,).
    stride : int, default: 1
    pad : int, default: 0
        Zero padding added on every spatial border.

    Returns
    -------
    output : Tensor
        Output of shape (C_out, H', W').
    tape : LayerTape
    """
    x = as_tensor(x, ndim=3, name="x")
    kernels = as_tensor(kernels, ndim=4, name="kernels")
    bias = as_tensor(bias, ndim=1, name="bias")
    num_out_channels, num_in_channels, kernel_height, kernel_width = kernels.shape
    if x.shape[0] != num_in_channels:
        raise DimensionError(f"Input has {x.shape[0]} channels but kernels {kernels.shape} expect {num_in_channels}.")
    if bias.shape != (num_out_channels,):
        raise DimensionError(f"Bias shape {bias.shape} does not match {num_out_channels} output channels.")
    if stride < 1 or pad < 0:
        raise ConfigurationError(f"Invalid stride {stride} or pad {pad}.")

    out_h = conv2d_output_size(x.shape[1], kernel_height, stride, pad)
    out_w = conv2d_output_size(x.shape[2], kernel_width, stride, pad)
    x_padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))

    output = np.zeros((num_out_channels, out_h, out_w))
    for di in range(kernel_height):
        for dj in range(kernel_width):
            window = _window(x_padded, di, dj, stride, out_h, out_w)
            output += np.tensordot(kernels[:, :, di, dj], window, axes=([1], [0]))
    output += bias[:, np.newaxis, np.newaxis]

    tape = LayerTape(kind="conv2d", cache=dict(x=x, kernels=kernels, stride=stride, pad=pad), output_shape=output.shape)
    return output, tape


def conv2d_backward(tape: LayerTape, grad_out: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """Exact gradients (grad_x, grad_kernels, grad_bias) of ``conv2d_forward``."""
    grad_out = as_tensor(grad_out, ndim=3, name="grad_out")
    cache = tape.consume(kind="conv2d", grad_shape=grad_out.shape)
    x, kernels, stride, pad = cache["x"], cache["kernels"], cache["stride"], cache["pad"]
    _, height, width = x.shape
    _, _, kernel_height, kernel_width = kernels.shape
    _, out_h, out_w = grad_out.shape

    x_padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    grad_x_padded = np.zeros_like(x_padded)
    grad_kernels = np.zeros_like(kernels)
    for di in range(kernel_height):
        for dj in range(kernel_width):
            window = _window(x_padded, di, dj, stride, out_h, out_w)
            grad_kernels[:, :, di, dj] = np.tensordot(grad_out, window, axes=([1, 2], [1, 2]))
            grad_window = _window(grad_x_padded, di, dj, stride, out_h, out_w)
            grad_window += np.tensordot(kernels[:, :, di, dj], grad_out, axes=([0], [0]))

    grad_x = grad_x_padded[:, pad : pad + height, pad : pad + width].copy()
    grad_bias = grad_out.sum(axis=(1, 2))
    return grad_x, grad_kernels, grad_bias


def relu(x: Tensor) -> Tuple[Tensor, LayerTape]:
    """Elementwise max(0, x)."""
    x = as_tensor(x, name="x")
    mask = x > 0
    output = np.maximum(x, 0.0)
    return output, LayerTape(kind="relu", cache=dict(mask=mask), output_shape=output.shape)


def relu_backward(tape: LayerTape, grad_out: Tensor) -> Tensor:
    # the subgradient at exactly 0 is 0
    grad_out = as_tensor(grad_out, name="grad_out")
    cache = tape.consume(kind="relu", grad_shape=grad_out.shape)
    return np.where(cache["mask"], grad_out, 0.0)


def avg_pool_forward(x: Tensor) -> Tuple[Tensor, LayerTape]:
    """Non-overlapping 2x2 mean pooling; a trailing odd row or column is dropped."""
    x = as_tensor(x, ndim=3, name="x")
    num_channels, height, width = x.shape
    out_h, out_w = height // 2, width // 2
    if out_h == 0 or out_w == 0:
        raise ConfigurationError(f"Cannot downsample a feature map of shape {x.shape} by 2.")
    blocks = x[:, : 2 * out_h, : 2 * out_w].reshape(num_channels, out_h, 2, out_w, 2)
    output = blocks.mean(axis=(2, 4))
    return output, LayerTape(kind="avg_pool", cache=dict(input_shape=x.shape), output_shape=output.shape)


def avg_pool_backward(tape: LayerTape, grad_out: Tensor) -> Tensor:
    grad_out = as_tensor(grad_out, ndim=3, name="grad_out")
    cache = tape.consume(kind="avg_pool", grad_shape=grad_out.shape)
    _, out_h, out_w = grad_out.shape
    grad_x = np.zeros(cache["input_shape"])
    grad_x[:, : 2 * out_h, : 2 * out_w] = np.repeat(np.repeat(grad_out, 2, axis=1), 2, axis=2) / 4.0
    return grad_x


def fc_forward(x: Tensor, w: Tensor, b: Tensor) -> Tuple[Tensor, LayerTape]:
    """Affine map ``w @ x + b`` of a feature vector x [d] with w [c x d] and b [c]."""
    x = as_tensor(x, ndim=1, name="x")
    w = as_tensor(w, ndim=2, name="w")
    b = as_tensor(b, ndim=1, name="b")
    if w.shape[1] != x.shape[0] or b.shape[0] != w.shape[0]:
        raise DimensionError(f"Fully-connected shapes disagree: x {x.shape}, w {w.shape}, b {b.shape}.")
    logits = w @ x + b
    return logits, LayerTape(kind="fc", cache=dict(x=x, w=w), output_shape=logits.shape)


def fc_backward(tape: LayerTape, grad_out: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """Exact gradients (grad_x, grad_w, grad_b) of ``fc_forward``."""
    grad_out = as_tensor(grad_out, ndim=1, name="grad_out")
    cache = tape.consume(kind="fc", grad_shape=grad_out.shape)
    x, w = cache["x"], cache["w"]
    return w.T @ grad_out, np.outer(grad_out, x), grad_out.copy()


def softmax_ce(logits: Tensor, label: int) -> Tuple[float, Tensor]:
    """
    Softmax cross-entropy of a logit vector against a class index.

    Returns
    -------
    loss : float
        ``-log softmax(logits)[label]``, computed after max-subtraction.
    grad_logits : Tensor
        ``softmax(logits) - onehot(label)``.
    """
    logits = as_tensor(logits, ndim=1, name="logits")
    num_classes = logits.shape[0]
    if not 0 <= label < num_classes:
        raise ConfigurationError(f"Label {label} is out of range for {num_classes} classes.")
    shifted = logits - logits.max()
    log_partition = np.log(np.exp(shifted).sum())
    loss = float(log_partition - shifted[label])
    grad_logits = np.exp(shifted - log_partition)
    grad_logits[label] -= 1.0
    return loss, grad_logits
