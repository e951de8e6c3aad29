from .tape import LayerTape, Tensor, as_tensor
from .layers import (
    avg_pool_backward,
    avg_pool_forward,
    conv2d_backward,
    conv2d_forward,
    conv2d_output_size,
    fc_backward,
    fc_forward,
    matmul,
    relu,
    relu_backward,
    softmax,
    softmax_ce,
)
