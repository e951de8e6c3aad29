"""Central finite-difference checks of every differentiable layer and of the full network."""
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple
from warnings import warn

import numpy as np
import pandas as pd
from tqdm import tqdm

from sa_reid.attention import gap_backward, gap_forward, sa_backward, sa_forward, stripe_pool, stripe_pool_backward
from sa_reid.exceptions import ConfigurationError, GradientCheckError
from sa_reid.model import ModelConfig, StageConfig, backward, forward_train, init_params, total_loss
from sa_reid.numerics import (
    Tensor,
    avg_pool_backward,
    avg_pool_forward,
    conv2d_backward,
    conv2d_forward,
    fc_backward,
    fc_forward,
    relu,
    relu_backward,
    softmax_ce,
)

GRADCHECK_LAYERS = (
    "conv2d",
    "relu",
    "avg_pool",
    "fc",
    "softmax_ce",
    "sa",
    "gap_mean",
    "gap_sum",
    "stripe_pool",
    "end_to_end",
)
REPORT_COLUMNS = ["layer", "max_relative_error", "tolerance", "skipped", "passed"]
# parameters whose gradients stay below this are compared in absolute terms (finite-difference round-off level)
END_TO_END_FLOOR = 1e-8

# inputs, forward(inputs) -> (output, tape), backward(tape, grad_output) -> {input name: gradient}
LayerCase = Tuple[Dict[str, Tensor], Callable, Callable]


@dataclass(frozen=True)
class GradcheckConfig:
    """
    Settings of the finite-difference suite.

    ``num_random_cases`` random tensors check the attention layer, ``num_layer_cases`` every other layer.
    Shapes are drawn up to ``max_channels`` x ``max_side`` x ``max_side``.
    """

    step: float = 1e-5
    num_random_cases: int = 100
    num_layer_cases: int = 10
    max_channels: int = 4
    max_side: int = 8
    layer_tolerance: float = 1e-5
    end_to_end_tolerance: float = 1e-4
    end_to_end_height: int = 8
    end_to_end_width: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.step <= 0:
            raise ConfigurationError(f"The finite-difference step must be positive, got {self.step}.")
        for name in ("num_random_cases", "num_layer_cases", "max_channels", "max_side"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"'{name}' must be positive, got {getattr(self, name)}.")


def relative_error(analytic: Tensor, numeric: Tensor, floor: float = 1e-12) -> float:
    """``max|a - n| / max(max|a|, max|n|, floor)``."""
    analytic, numeric = np.ravel(analytic), np.ravel(numeric)
    if not analytic.size:
        return 0.0
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def numerical_gradient(function: Callable[[Tensor], float], x: Tensor, step: float = 1e-5) -> Tensor:
    """Central-difference gradient of a scalar function with respect to every entry of ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    for index in range(flat.size):
        original = flat[index]
        flat[index] = original + step
        plus = function(x)
        flat[index] = original - step
        minus = function(x)
        flat[index] = original
        grad.flat[index] = (plus - minus) / (2.0 * step)
    return grad


def _random_map(rng: np.random.Generator, cfg: GradcheckConfig, min_side: int = 1) -> Tensor:
    shape = (
        rng.integers(1, cfg.max_channels + 1),
        rng.integers(min_side, max(cfg.max_side, min_side) + 1),
        rng.integers(min_side, max(cfg.max_side, min_side) + 1),
    )
    return rng.standard_normal(shape)


def _conv2d_case(rng: np.random.Generator, cfg: GradcheckConfig) -> LayerCase:
    kernel = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, (kernel - 1) // 2 + 1))
    out_h, out_w = rng.integers(1, 5, size=2)
    # sizes chosen so that the strided windows tile the padded input exactly
    height, width = stride * (out_h - 1) + kernel - 2 * pad, stride * (out_w - 1) + kernel - 2 * pad
    in_channels, out_channels = rng.integers(1, cfg.max_channels + 1, size=2)
    inputs = dict(
        x=rng.standard_normal((in_channels, height, width)),
        kernels=rng.standard_normal((out_channels, in_channels, kernel, kernel)),
        bias=rng.standard_normal(out_channels),
    )

    def forward(values):
        return conv2d_forward(values["x"], values["kernels"], values["bias"], stride=stride, pad=pad)

    def backward(tape, grad):
        return dict(zip(("x", "kernels", "bias"), conv2d_backward(tape, grad)))

    return inputs, forward, backward


def _relu_case(rng: np.random.Generator, cfg: GradcheckConfig) -> LayerCase:
    x = _random_map(rng, cfg)
    # keep every input away from the kink at 0
    x = np.sign(x) * (0.1 + np.abs(x))
    return dict(x=x), lambda values: relu(values["x"]), lambda tape, grad: dict(x=relu_backward(tape, grad))


def _avg_pool_case(rng: np.random.Generator, cfg: GradcheckConfig) -> LayerCase:
    return (
        dict(x=_random_map(rng, cfg, min_side=2)),
        lambda values: avg_pool_forward(values["x"]),
        lambda tape, grad: dict(x=avg_pool_backward(tape, grad)),
    )


def _fc_case(rng: np.random.Generator, cfg: GradcheckConfig) -> LayerCase:
    in_features, out_features = rng.integers(1, cfg.max_side + 1, size=2)
    inputs = dict(
        x=rng.standard_normal(in_features),
        w=rng.standard_normal((out_features, in_features)),
        b=rng.standard_normal(out_features),
    )

    def backward(tape, grad):
        return dict(zip(("x", "w", "b"), fc_backward(tape, grad)))

    return inputs, lambda values: fc_forward(values["x"], values["w"], values["b"]), backward


def _softmax_ce_case(rng: np.random.Generator, cfg: GradcheckConfig) -> LayerCase:
    num_classes = int(rng.integers(1, cfg.max_side + 1))
    label = int(rng.integers(num_classes))

    def forward(values):
        loss, grad_logits = softmax_ce(values["logits"], label)
        return np.asarray(loss), grad_logits

    return (
        dict(logits=3.0 * rng.standard_normal(num_classes)),
        forward,
        lambda grad_logits, grad: dict(logits=grad * grad_logits),
    )


def _sa_case(rng: np.random.Generator, cfg: GradcheckConfig) -> LayerCase:
    def forward(values):
        output, _, tape = sa_forward(values["f"])
        return output, tape

    return dict(f=_random_map(rng, cfg)), forward, lambda tape, grad: dict(f=sa_backward(tape, grad))


def _gap_case(mode: str) -> Callable:
    def case(rng: np.random.Generator, cfg: GradcheckConfig) -> LayerCase:
        return (
            dict(f=_random_map(rng, cfg)),
            lambda values: gap_forward(values["f"], mode=mode),
            lambda tape, grad: dict(f=gap_backward(tape, grad)),
        )

    return case


def _stripe_pool_case(rng: np.random.Generator, cfg: GradcheckConfig) -> LayerCase:
    f = _random_map(rng, cfg)
    m = int(rng.integers(1, f.shape[1] + 1))

    def forward(values):
        parts, tape = stripe_pool(values["f"], m)
        return np.stack(parts), tape

    return dict(f=f), forward, lambda tape, grad: dict(f=stripe_pool_backward(tape, list(grad)))


LAYER_CASES = dict(
    conv2d=_conv2d_case,
    relu=_relu_case,
    avg_pool=_avg_pool_case,
    fc=_fc_case,
    softmax_ce=_softmax_ce_case,
    sa=_sa_case,
    gap_mean=_gap_case("mean"),
    gap_sum=_gap_case("sum"),
    stripe_pool=_stripe_pool_case,
)


def check_layer(
    layer: str, cfg: GradcheckConfig, num_cases: Optional[int] = None, flip_backward: bool = False
) -> float:
    """
    Largest relative error between the analytic and the finite-difference gradient of one layer.

    Every case projects the layer output on a random tensor R and differentiates ``sum(R * output)``
    with respect to every input.
    """
    if layer not in LAYER_CASES:
        raise ConfigurationError(f"Unknown layer '{layer}', expected one of {sorted(LAYER_CASES)}.")
    if num_cases is None:
        num_cases = cfg.num_random_cases if layer == "sa" else cfg.num_layer_cases
    worst = 0.0
    for case_index in range(num_cases):
        rng = np.random.default_rng([cfg.seed, GRADCHECK_LAYERS.index(layer), case_index])
        inputs, forward, backward_fn = LAYER_CASES[layer](rng, cfg)
        output, tape = forward(inputs)
        projection = rng.standard_normal(np.shape(output))
        analytic = backward_fn(tape, projection)
        if flip_backward:
            analytic = {name: -grad for name, grad in analytic.items()}

        def projected(values):
            return float(np.sum(projection * forward(values)[0]))

        for name, value in inputs.items():
            numeric = numerical_gradient(lambda v: projected({**inputs, name: v}), value, step=cfg.step)
            worst = max(worst, relative_error(analytic[name], numeric))
    return worst


def tiny_model_config(cfg: GradcheckConfig) -> ModelConfig:
    """Two-stage network with every branch active, sized for the end-to-end check."""
    return ModelConfig(
        stages=(StageConfig(out_channels=4), StageConfig(out_channels=6, downsample=False)),
        input_shape=(3, cfg.end_to_end_height, cfg.end_to_end_width),
        num_classes=3,
        m=2,
        reduced_dim=4,
        lam=0.3,
        sa_on_ds=True,
        sa_on_backbone=True,
        seed=cfg.seed,
    )


def _relu_masks(record) -> list:
    return [tape.cache["mask"] for name, tape in record.tapes.items() if name.endswith(".relu")]


def check_end_to_end(
    cfg: GradcheckConfig, flip_backward: bool = False, verbose: bool = False
) -> Tuple[Dict[str, float], int]:
    """
    Finite-difference check of every parameter gradient of ``total_loss`` on ``tiny_model_config``.

    Coordinates whose perturbation changes a ReLU activation pattern are skipped: the loss is not
    differentiable across them.

    Returns
    -------
    errors : dict
        Per parameter, ``relative_error`` of its checked coordinates, normalised by that parameter's own
        largest gradient magnitude (at least ``END_TO_END_FLOOR``).
    skipped : int
        Number of skipped coordinates.
    """
    model_cfg = tiny_model_config(cfg)
    params = init_params(model_cfg)
    rng = np.random.default_rng([cfg.seed, GRADCHECK_LAYERS.index("end_to_end")])
    image = rng.random(model_cfg.input_shape)
    label = int(rng.integers(model_cfg.num_classes))

    record, losses = forward_train(params, model_cfg, image, label)
    analytic = backward(record, losses, model_cfg.lam, params)
    if flip_backward:
        analytic = {name: -grad for name, grad in analytic.items()}

    errors, skipped = {}, 0
    for name in tqdm(params, desc="End-to-end check", unit="tensor", disable=not verbose):
        numeric = np.zeros_like(params[name])
        checked = np.zeros(params[name].shape, dtype=bool)
        for index in range(params[name].size):
            evaluations = []
            for sign in (1.0, -1.0):
                perturbed = dict(params)
                perturbed[name] = params[name].copy()
                perturbed[name].flat[index] += sign * cfg.step
                perturbed_record, perturbed_losses = forward_train(perturbed, model_cfg, image, label)
                evaluations.append((total_loss(perturbed_losses, model_cfg.lam), _relu_masks(perturbed_record)))
            (plus, plus_masks), (minus, minus_masks) = evaluations
            if any(not np.array_equal(a, b) for a, b in zip(plus_masks, minus_masks)):
                skipped += 1
                continue
            numeric.flat[index] = (plus - minus) / (2.0 * cfg.step)
            checked.flat[index] = True
        errors[name] = relative_error(analytic[name][checked], numeric[checked], floor=END_TO_END_FLOOR)
    if skipped:
        warn(f"Skipped {skipped} coordinates whose perturbation crosses a ReLU kink.")
    return errors, skipped


def run_gradient_checks(
    cfg: GradcheckConfig, corrupt_layer: Optional[str] = None, verbose: bool = False
) -> pd.DataFrame:
    """
    Run the full suite and report one row per differentiable layer plus the end-to-end network.

    Parameters
    ----------
    cfg : GradcheckConfig
    corrupt_layer : str, optional
        Name of a layer whose analytic gradient is sign-flipped. Used as a negative control.
    verbose : bool, default: False

    Returns
    -------
    pd.DataFrame
        Columns 'layer', 'max_relative_error', 'tolerance', 'skipped' and 'passed'.
    """
    if corrupt_layer is not None and corrupt_layer not in GRADCHECK_LAYERS:
        raise ConfigurationError(f"Unknown layer '{corrupt_layer}', expected one of {list(GRADCHECK_LAYERS)}.")
    rows = []
    for layer in tqdm(GRADCHECK_LAYERS, desc="Gradient checks", unit="layer", disable=not verbose):
        flip_backward = layer == corrupt_layer
        if layer == "end_to_end":
            errors, skipped = check_end_to_end(cfg, flip_backward=flip_backward)
            error, tolerance = max(errors.values()), cfg.end_to_end_tolerance
        else:
            error, tolerance, skipped = check_layer(layer, cfg, flip_backward=flip_backward), cfg.layer_tolerance, 0
        rows.append(
            dict(layer=layer, max_relative_error=error, tolerance=tolerance, skipped=skipped, passed=error < tolerance)
        )
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def assert_gradients_pass(report: pd.DataFrame) -> None:
    failed = report.loc[~report["passed"].astype(bool)]
    if not failed.empty:
        details = ", ".join(
            f"'{row.layer}' ({row.max_relative_error:.3g} >= {row.tolerance:.0e})" for row in failed.itertuples()
        )
        raise GradientCheckError(f"Gradient check failed for {details}.")
