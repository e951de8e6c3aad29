"""Class activation maps for a fully-connected head on the raw map, on GAP, and on GAP after spatial
attention."""
from dataclasses import dataclass
from typing import Literal

import numpy as np

from sa_reid.attention import sa_forward
from sa_reid.exceptions import DimensionError
from sa_reid.numerics import Tensor, as_tensor

Provenance = Literal["gap", "sa", "full_fc"]


@dataclass(frozen=True)
class Cam:
    """A single-channel (H, W) map of per-position contributions to the logit of ``class_id``."""

    values: Tensor
    class_id: int
    provenance: Provenance


def _check_class_weights(f: Tensor, w_c: Tensor) -> None:
    if w_c.shape != (f.shape[0],):
        raise DimensionError(f"Class weights of shape {w_c.shape} do not match {f.shape[0]} feature channels.")


def cam_gap(f: Tensor, w_c: Tensor, class_id: int = 0) -> Cam:
    """``M(i, j) = sum_k w_k * f_k(i, j)``: the map of a GAP + FC head."""
    f = as_tensor(f, ndim=3, name="f")
    w_c = as_tensor(w_c, ndim=1, name="w_c")
    _check_class_weights(f, w_c)
    return Cam(values=np.einsum("k,khw->hw", w_c, f), class_id=class_id, provenance="gap")


def cam_sa(f: Tensor, w_c: Tensor, class_id: int = 0) -> Cam:
    """``M(i, j) = sum_k w_k * F_k(i, j)`` with F the spatial attention output; equals the GAP map times p."""
    f = as_tensor(f, ndim=3, name="f")
    w_c = as_tensor(w_c, ndim=1, name="w_c")
    _check_class_weights(f, w_c)
    attended, _, _ = sa_forward(f)
    return Cam(values=np.einsum("k,khw->hw", w_c, attended), class_id=class_id, provenance="sa")


def cam_full_fc(f: Tensor, w_c_full: Tensor, class_id: int = 0) -> Cam:
    """
    Map of a fully-connected head applied directly to the flattened feature map.

    Parameters
    ----------
    f : Tensor
        Feature map of shape (C, H, W).
    w_c_full : Tensor
        Position-specific weights of shape (H, W, C).
    """
    f = as_tensor(f, ndim=3, name="f")
    w_c_full = as_tensor(w_c_full, ndim=3, name="w_c_full")
    num_channels, height, width = f.shape
    if w_c_full.shape != (height, width, num_channels):
        raise DimensionError(
            f"Full weights of shape {w_c_full.shape} do not match feature map shape {f.shape} (expected H x W x C)."
        )
    return Cam(values=np.einsum("hwk,khw->hw", w_c_full, f), class_id=class_id, provenance="full_fc")


def logits_from_cam(cam: Cam) -> float:
    """The class logit (without bias) under sum-mode pooling is the sum of the map."""
    return float(cam.values.sum())
