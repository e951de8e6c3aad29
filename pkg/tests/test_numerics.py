import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from oracles import conv2d_sliding_window

from sa_reid.exceptions import ConfigurationError, ContractError, DimensionError
from sa_reid.numerics import (
    as_tensor,
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
from sa_reid.utils import numerical_gradient, relative_error


def test_as_tensor_checks_rank():
    assert as_tensor([[1, 2]]).dtype == np.float64
    with pytest.raises(DimensionError, match="'image'"):
        as_tensor([1.0, 2.0], ndim=3, name="image")


def test_matmul_shape_mismatch():
    assert_array_equal(matmul(np.eye(2), np.array([[1.0], [2.0]])), [[1.0], [2.0]])
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_softmax_is_stable_for_large_logits():
    probabilities = softmax(np.array([1000.0, 1000.0, 1000.0]))
    assert_allclose(probabilities, np.full(3, 1 / 3), rtol=0, atol=1e-15)
    assert np.isclose(softmax(np.array([1e4, 0.0])).sum(), 1.0)


@pytest.mark.parametrize("stride, pad, kernel", [(1, 0, 3), (1, 1, 3), (2, 1, 3), (2, 0, 1), (1, 0, 2)])
def test_conv2d_matches_sliding_window(rng, stride, pad, kernel):
    x = rng.standard_normal((2, 7, 5))
    kernels = rng.standard_normal((3, 2, kernel, kernel))
    bias = rng.standard_normal(3)
    output, _ = conv2d_forward(x, kernels, bias, stride=stride, pad=pad)
    assert_allclose(output, conv2d_sliding_window(x, kernels, bias, stride=stride, pad=pad), rtol=0, atol=1e-12)


def test_conv2d_identity_kernel():
    x = np.arange(16.0).reshape(1, 4, 4)
    kernels = np.zeros((1, 1, 3, 3))
    kernels[0, 0, 1, 1] = 1.0
    output, _ = conv2d_forward(x, kernels, np.zeros(1), pad=1)
    assert_array_equal(output, x)


def test_conv2d_rejects_non_integral_output():
    assert conv2d_output_size(8, kernel=3, stride=1, pad=1) == 8
    with pytest.raises(ConfigurationError):
        conv2d_output_size(8, kernel=3, stride=2, pad=0)
    with pytest.raises(DimensionError):
        conv2d_forward(np.ones((2, 4, 4)), np.ones((1, 3, 3, 3)), np.zeros(1))


def test_conv2d_backward_matches_finite_differences(rng):
    x = rng.standard_normal((2, 5, 5))
    kernels = rng.standard_normal((3, 2, 3, 3))
    bias = rng.standard_normal(3)
    output, tape = conv2d_forward(x, kernels, bias, stride=2, pad=1)
    projection = rng.standard_normal(output.shape)
    grad_x, grad_kernels, grad_bias = conv2d_backward(tape, projection)

    def loss(x_value, kernel_value, bias_value):
        return np.sum(projection * conv2d_forward(x_value, kernel_value, bias_value, stride=2, pad=1)[0])

    assert relative_error(grad_x, numerical_gradient(lambda v: loss(v, kernels, bias), x)) < 1e-6
    assert relative_error(grad_kernels, numerical_gradient(lambda v: loss(x, v, bias), kernels)) < 1e-6
    assert relative_error(grad_bias, numerical_gradient(lambda v: loss(x, kernels, v), bias)) < 1e-6


def test_relu_gradient_is_zero_at_zero():
    output, tape = relu(np.array([-1.0, 0.0, 2.0]))
    assert_array_equal(output, [0.0, 0.0, 2.0])
    assert_array_equal(relu_backward(tape, np.ones(3)), [0.0, 0.0, 1.0])


def test_relu_propagates_nan():
    output, _ = relu(np.array([np.nan, -1.0, 2.0]))
    assert np.isnan(output[0])
    assert_array_equal(output[1:], [0.0, 2.0])


def test_avg_pool_of_ones():
    output, tape = avg_pool_forward(np.ones((1, 4, 4)))
    assert_array_equal(output, np.ones((1, 2, 2)))
    assert_array_equal(avg_pool_backward(tape, np.ones((1, 2, 2))), np.full((1, 4, 4), 0.25))


def test_avg_pool_drops_odd_remainder(rng):
    x = rng.standard_normal((2, 5, 3))
    output, tape = avg_pool_forward(x)
    assert output.shape == (2, 2, 1)
    assert_allclose(output[:, 0, 0], x[:, :2, :2].mean(axis=(1, 2)))
    grad = avg_pool_backward(tape, np.ones((2, 2, 1)))
    assert_array_equal(grad[:, 4, :], 0.0)
    assert_array_equal(grad[:, :, 2], 0.0)


def test_avg_pool_backward_matches_finite_differences(rng):
    x = rng.standard_normal((3, 6, 4))
    output, tape = avg_pool_forward(x)
    projection = rng.standard_normal(output.shape)
    numeric = numerical_gradient(lambda v: np.sum(projection * avg_pool_forward(v)[0]), x)
    assert relative_error(avg_pool_backward(tape, projection), numeric) < 1e-6


def test_fc_backward(rng):
    x, w, b = rng.standard_normal(4), rng.standard_normal((3, 4)), rng.standard_normal(3)
    logits, tape = fc_forward(x, w, b)
    assert_allclose(logits, w @ x + b)
    grad = rng.standard_normal(3)
    grad_x, grad_w, grad_b = fc_backward(tape, grad)
    assert_allclose(grad_x, w.T @ grad)
    assert_allclose(grad_w, np.outer(grad, x))
    assert_array_equal(grad_b, grad)
    with pytest.raises(DimensionError):
        fc_forward(np.ones(5), w, b)


def test_softmax_ce_uniform_logits():
    loss, grad = softmax_ce(np.zeros(4), label=2)
    assert np.isclose(loss, np.log(4))
    assert_allclose(grad, [0.25, 0.25, -0.75, 0.25])


def test_softmax_ce_single_class_is_exactly_zero():
    loss, grad = softmax_ce(np.array([3.7]), label=0)
    assert loss == 0.0
    assert_array_equal(grad, [0.0])


def test_softmax_ce_gradient(rng):
    logits = 5.0 * rng.standard_normal(6)
    _, grad = softmax_ce(logits, label=1)
    assert np.isclose(grad.sum(), 0.0, atol=1e-15)
    numeric = numerical_gradient(lambda v: softmax_ce(v, label=1)[0], logits)
    assert relative_error(grad, numeric) < 1e-6


def test_softmax_ce_label_out_of_range():
    with pytest.raises(ConfigurationError, match="out of range"):
        softmax_ce(np.zeros(3), label=3)


def test_tape_is_consumed_once():
    _, tape = relu(np.ones(3))
    relu_backward(tape, np.ones(3))
    with pytest.raises(ContractError, match="already been consumed"):
        relu_backward(tape, np.ones(3))


def test_tape_rejects_wrong_kind_and_shape():
    _, tape = relu(np.ones((1, 2, 2)))
    with pytest.raises(ContractError):
        avg_pool_backward(tape, np.ones((1, 1, 1)))
    _, tape = relu(np.ones(3))
    with pytest.raises(DimensionError):
        relu_backward(tape, np.ones(4))
