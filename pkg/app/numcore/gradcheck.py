"""Central finite-difference gradient checks."""
from __future__ import annotations

from typing import Callable, Dict, Mapping

import numpy as np

from app.numcore.tensor import Tensor, backward, no_grad

LossFn = Callable[[], Tensor]


def numerical_gradient(loss_fn: LossFn, param: Tensor, step: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            plus = loss_fn().item()
            flat[i] = original - step
            minus = loss_fn().item()
            flat[i] = original
            grad.reshape(-1)[i] = (plus - minus) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(
    loss_fn: LossFn, params: Mapping[str, Tensor], step: float = 1e-5
) -> Dict[str, float]:
    """Relative error between analytic and numeric gradients, per parameter."""
    for param in params.values():
        param.zero_grad()
    backward(loss_fn())
    errors = {}
    for name, param in params.items():
        analytic = param.grad if param.grad is not None else np.zeros_like(param.data)
        errors[name] = relative_error(analytic, numerical_gradient(loss_fn, param, step))
    return errors
