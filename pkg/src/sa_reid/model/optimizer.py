from typing import Optional, Tuple

import numpy as np

from sa_reid.exceptions import DimensionError
from sa_reid.model.params import Params, zeros_like_params


def sgd_step(
    params: Params,
    grads: Params,
    lr: float,
    momentum: float,
    velocity: Optional[Params] = None,
    weight_decay: float = 0.0,
) -> Tuple[Params, Params]:
    """
    One step of SGD with classic (non-Nesterov) momentum.

    ``v <- momentum * v + (g + weight_decay * w)`` then ``w <- w - lr * v``.

    Parameters
    ----------
    params : Params
    grads : Params
        Gradients keyed and shaped like ``params``.
    lr : float
    momentum : float
    velocity : Params, optional
        Velocity of the previous step. Starts at zero when omitted.
    weight_decay : float, default: 0.0
        L2 coefficient added to the gradient before the momentum update.

    Returns
    -------
    params : Params
        The updated parameters (new arrays, the inputs are left untouched).
    velocity : Params
    """
    if velocity is None:
        velocity = zeros_like_params(params)
    if set(grads) != set(params) or set(velocity) != set(params):
        missing = sorted(set(params) ^ set(grads)) or sorted(set(params) ^ set(velocity))
        raise DimensionError(f"Gradients and parameters do not cover the same tensors: {missing}.")

    new_params, new_velocity = type(params)(), type(params)()
    for name, value in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        if grad.shape != value.shape or velocity[name].shape != value.shape:
            raise DimensionError(
                f"Gradient of shape {grad.shape} does not match parameter '{name}' of shape {value.shape}."
            )
        if weight_decay:
            grad = grad + weight_decay * value
        new_velocity[name] = momentum * velocity[name] + grad
        new_params[name] = value - lr * new_velocity[name]
    return new_params, new_velocity
