"""Adam with bias correction, plus the learning-rate schedules."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from app.core.errors import ContractError
from app.numcore.tensor import Tensor


@dataclass
class OptimizerState:
    """Per-parameter moments keyed by parameter name."""

    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_parameters(cls, params: Mapping[str, Tensor]) -> "OptimizerState":
        return cls(
            first_moment={name: np.zeros_like(p.data) for name, p in params.items()},
            second_moment={name: np.zeros_like(p.data) for name, p in params.items()},
        )


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, Optional[np.ndarray]],
    state: OptimizerState,
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> OptimizerState:
    """Apply one bias-corrected Adam update.

    Parameters whose gradient is ``None`` are left untouched, moments included.
    A learning rate of zero advances the step counter without moving anything.
    """
    if state.step < 0:
        raise ContractError(f"optimizer step counter is negative: {state.step}")
    if lr < 0:
        raise ContractError(f"learning rate must be non-negative, got {lr}")
    missing = [name for name in params if name not in state.first_moment]
    if missing:
        raise ContractError(f"no moment state for parameters: {', '.join(sorted(missing))}")

    beta1, beta2 = betas
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        m = beta1 * state.first_moment[name] + (1.0 - beta1) * grad
        v = beta2 * state.second_moment[name] + (1.0 - beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        update = (m / correction1) / (np.sqrt(v / correction2) + eps)
        param.data = param.data - lr * update
    return state


class Adam:
    """Stateful wrapper over ``adam_step`` for a fixed parameter set."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        self.params = dict(params)
        self.betas = betas
        self.eps = eps
        self.state = OptimizerState.for_parameters(self.params)

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    def step(self, lr: float) -> None:
        grads = {name: p.grad for name, p in self.params.items()}
        adam_step(self.params, grads, self.state, lr, betas=self.betas, eps=self.eps)


def warmup_linear_decay(step: int, warmup: int, total: int, peak: float) -> float:
    """0 -> peak over ``warmup`` steps, then linearly down to 0 at ``total``."""
    if step < warmup:
        return peak * step / warmup
    remaining = max(0, total - step)
    return peak * remaining / max(1, total - warmup)


def constant(step: int, peak: float) -> float:
    return peak
