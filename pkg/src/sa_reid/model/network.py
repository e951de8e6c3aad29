"""Forward and backward passes of the staged backbone with deep-supervision branches (SA -> GAP -> FC),
part classifiers over horizontal stripes, and the main head over the mean of the reduced parts."""
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from sa_reid.attention import gap_backward, gap_forward, sa_backward, sa_forward, stripe_pool, stripe_pool_backward
from sa_reid.exceptions import ConfigurationError, ContractError, DimensionError
from sa_reid.model.model_config import ModelConfig
from sa_reid.model.params import Params, zeros_like_params
from sa_reid.numerics import (
    LayerTape,
    Tensor,
    as_tensor,
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

BRANCHES = ("ds", "parts", "main")


@dataclass
class Losses:
    ds: List[float]
    parts: List[float]
    main: float


@dataclass
class ForwardRecord:
    """Everything a training forward pass produced, including the tapes its backward pass consumes."""

    label: int
    stage_maps: List[Tensor]
    ds_logits: List[Tensor]
    part_logits: List[Tensor]
    global_logits: Tensor
    reduced_parts: List[Tensor]
    tapes: Dict[str, LayerTape] = field(repr=False)
    loss_grads: Dict[str, object] = field(repr=False)
    sa_on_ds: bool = True
    sa_on_backbone: bool = False


def _check_image(cfg: ModelConfig, image: Tensor) -> Tensor:
    image = as_tensor(image, ndim=3, name="image")
    if image.shape != tuple(cfg.input_shape):
        raise DimensionError(f"Image shape {image.shape} does not match the configured input {cfg.input_shape}.")
    return image


def forward_backbone(params: Params, cfg: ModelConfig, image: Tensor, tapes: Dict[str, LayerTape]) -> List[Tensor]:
    """Run every backbone stage and return the stage output maps."""
    stage_maps = []
    x = image
    for index, stage in enumerate(cfg.stages, start=1):
        x, tapes[f"stage{index}.conv"] = conv2d_forward(
            x,
            params[f"stage{index}.conv.weight"],
            params[f"stage{index}.conv.bias"],
            stride=stage.stride,
            pad=stage.pad,
        )
        x, tapes[f"stage{index}.relu"] = relu(x)
        if stage.downsample:
            x, tapes[f"stage{index}.pool"] = avg_pool_forward(x)
        stage_maps.append(x)
    return stage_maps


def forward_parts(
    params: Params, cfg: ModelConfig, final_map: Tensor, tapes: Dict[str, LayerTape]
) -> List[Tensor]:
    """Stripe-pool the last map (after SA when enabled) and apply the shared 1x1 reduction to every stripe."""
    if cfg.sa_on_backbone:
        final_map, _, tapes["backbone.sa"] = sa_forward(final_map)
    parts, tapes["parts.stripe"] = stripe_pool(final_map, cfg.m)
    reduced_parts = []
    for index, part in enumerate(parts, start=1):
        reduced, tapes[f"reduce{index}"] = fc_forward(part, params["reduce.weight"], params["reduce.bias"])
        reduced_parts.append(reduced)
    return reduced_parts


def forward_train(params: Params, cfg: ModelConfig, image: Tensor, label: int) -> Tuple[ForwardRecord, Losses]:
    """
    Training forward pass for one image.

    Parameters
    ----------
    params : Params
    cfg : ModelConfig
    image : Tensor
        Image of shape ``cfg.input_shape``.
    label : int
        Class index in [0, num_classes).

    Returns
    -------
    record : ForwardRecord
    losses : Losses
        Deep-supervision losses (one per branch), part losses (one per stripe) and the main loss.
    """
    image = _check_image(cfg, image)
    if not 0 <= label < cfg.num_classes:
        raise ConfigurationError(f"Label {label} is out of range for {cfg.num_classes} classes.")

    tapes = {}
    stage_maps = forward_backbone(params, cfg, image, tapes)

    ds_logits, ds_losses, ds_grads = [], [], []
    for index, stage_map in enumerate(stage_maps[:-1], start=1):
        x = stage_map
        pooling_mode = "mean"
        if cfg.sa_on_ds:
            # sum of the attended map is already the p-weighted mean since p sums to one
            x, _, tapes[f"ds{index}.sa"] = sa_forward(x)
            pooling_mode = "sum"
        pooled, tapes[f"ds{index}.gap"] = gap_forward(x, mode=pooling_mode)
        logits, tapes[f"ds{index}.fc"] = fc_forward(
            pooled, params[f"ds{index}.fc.weight"], params[f"ds{index}.fc.bias"]
        )
        loss, grad = softmax_ce(logits, label)
        ds_logits.append(logits)
        ds_losses.append(loss)
        ds_grads.append(grad)

    reduced_parts = forward_parts(params, cfg, stage_maps[-1], tapes)
    part_logits, part_losses, part_grads = [], [], []
    for index, reduced in enumerate(reduced_parts, start=1):
        logits, tapes[f"part{index}.fc"] = fc_forward(
            reduced, params[f"part{index}.fc.weight"], params[f"part{index}.fc.bias"]
        )
        loss, grad = softmax_ce(logits, label)
        part_logits.append(logits)
        part_losses.append(loss)
        part_grads.append(grad)

    global_feature = np.mean(np.stack(reduced_parts), axis=0)
    global_logits, tapes["main.fc"] = fc_forward(global_feature, params["main.fc.weight"], params["main.fc.bias"])
    main_loss, main_grad = softmax_ce(global_logits, label)

    record = ForwardRecord(
        label=label,
        stage_maps=stage_maps,
        ds_logits=ds_logits,
        part_logits=part_logits,
        global_logits=global_logits,
        reduced_parts=reduced_parts,
        tapes=tapes,
        loss_grads=dict(ds=ds_grads, parts=part_grads, main=main_grad),
        sa_on_ds=cfg.sa_on_ds,
        sa_on_backbone=cfg.sa_on_backbone,
    )
    return record, Losses(ds=ds_losses, parts=part_losses, main=main_loss)


def total_loss(losses: Losses, lam: float) -> float:
    """``(1 - lam) * sum(parts) + lam * sum(ds) + lam * main``."""
    if not 0.0 <= lam <= 1.0:
        raise ConfigurationError(f"'lam' must lie in [0, 1], got {lam}.")
    return (1.0 - lam) * sum(losses.parts) + lam * sum(losses.ds) + lam * losses.main


def backward(
    record: ForwardRecord, losses: Losses, lam: float, params: Params, branches: Sequence[str] = BRANCHES
) -> Params:
    """
    Exact gradient of ``total_loss`` with respect to every parameter.

    Parameters
    ----------
    record : ForwardRecord
        The record of the forward pass; its tapes are consumed.
    losses : Losses
        The losses returned with ``record``.
    lam : float
        Loss weight, as in ``total_loss``.
    params : Params
        The parameters the forward pass used; gradients are returned under the same names.
    branches : sequence of {'ds', 'parts', 'main'}, optional
        Loss groups that contribute. By default all of them.

    Returns
    -------
    Params
        Gradients keyed like ``params``. Contributions of the branches to the shared backbone add up.
    """
    unknown = set(branches) - set(BRANCHES)
    if unknown:
        raise ConfigurationError(f"Unknown loss branches {sorted(unknown)}, expected a subset of {BRANCHES}.")
    if not 0.0 <= lam <= 1.0:
        raise ConfigurationError(f"'lam' must lie in [0, 1], got {lam}.")
    if len(losses.ds) != len(record.ds_logits) or len(losses.parts) != len(record.part_logits):
        raise ContractError("The losses do not belong to the given forward record.")

    tapes = record.tapes
    grads = zeros_like_params(params)
    num_parts = len(record.reduced_parts)
    stage_grads = [np.zeros_like(stage_map) for stage_map in record.stage_maps]

    grad_reduced = [np.zeros_like(reduced) for reduced in record.reduced_parts]
    if "main" in branches:
        grad_global, grad_w, grad_b = fc_backward(tapes["main.fc"], lam * record.loss_grads["main"])
        grads["main.fc.weight"] += grad_w
        grads["main.fc.bias"] += grad_b
        for index in range(num_parts):
            grad_reduced[index] += grad_global / num_parts

    if "parts" in branches:
        for index, part_grad in enumerate(record.loss_grads["parts"], start=1):
            grad_x, grad_w, grad_b = fc_backward(tapes[f"part{index}.fc"], (1.0 - lam) * part_grad)
            grads[f"part{index}.fc.weight"] += grad_w
            grads[f"part{index}.fc.bias"] += grad_b
            grad_reduced[index - 1] += grad_x

    if "main" in branches or "parts" in branches:
        grad_parts = []
        for index in range(1, num_parts + 1):
            grad_x, grad_w, grad_b = fc_backward(tapes[f"reduce{index}"], grad_reduced[index - 1])
            grads["reduce.weight"] += grad_w
            grads["reduce.bias"] += grad_b
            grad_parts.append(grad_x)
        grad_final = stripe_pool_backward(tapes["parts.stripe"], grad_parts)
        if record.sa_on_backbone:
            grad_final = sa_backward(tapes["backbone.sa"], grad_final)
        stage_grads[-1] += grad_final

    if "ds" in branches:
        for index, ds_grad in enumerate(record.loss_grads["ds"], start=1):
            grad_pooled, grad_w, grad_b = fc_backward(tapes[f"ds{index}.fc"], lam * ds_grad)
            grads[f"ds{index}.fc.weight"] += grad_w
            grads[f"ds{index}.fc.bias"] += grad_b
            grad_map = gap_backward(tapes[f"ds{index}.gap"], grad_pooled)
            if record.sa_on_ds:
                grad_map = sa_backward(tapes[f"ds{index}.sa"], grad_map)
            stage_grads[index - 1] += grad_map

    for index in range(len(record.stage_maps), 0, -1):
        grad = stage_grads[index - 1]
        if f"stage{index}.pool" in tapes:
            grad = avg_pool_backward(tapes[f"stage{index}.pool"], grad)
        grad = relu_backward(tapes[f"stage{index}.relu"], grad)
        grad_x, grad_w, grad_b = conv2d_backward(tapes[f"stage{index}.conv"], grad)
        grads[f"stage{index}.conv.weight"] += grad_w
        grads[f"stage{index}.conv.bias"] += grad_b
        if index > 1:
            stage_grads[index - 2] += grad_x

    return grads


def extract_embedding(params: Params, cfg: ModelConfig, image: Tensor) -> Tensor:
    """
    Inference feature of one image: the reduced part vectors concatenated in stripe order.

    Deep-supervision branches and classifiers are not evaluated. No normalisation is applied.
    """
    image = _check_image(cfg, image)
    tapes = {}
    stage_maps = forward_backbone(params, cfg, image, tapes)
    reduced_parts = forward_parts(params, cfg, stage_maps[-1], tapes)
    return np.concatenate(reduced_parts)


def stage_feature_maps(params: Params, cfg: ModelConfig, image: Tensor) -> List[Tensor]:
    """Output map of every backbone stage for one image."""
    image = _check_image(cfg, image)
    return forward_backbone(params, cfg, image, tapes={})
