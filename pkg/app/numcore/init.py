"""Parameter initialisers."""
from typing import Optional, Sequence

import numpy as np

from app.numcore.tensor import Tensor


def normal(rng: np.random.Generator, shape: Sequence[int], std: float = 0.02, name: Optional[str] = None) -> Tensor:
    """Trainable tensor drawn from N(0, std^2)."""
    return Tensor(rng.normal(0.0, std, size=tuple(shape)), requires_grad=True, name=name)


def zeros(shape: Sequence[int], name: Optional[str] = None) -> Tensor:
    return Tensor(np.zeros(tuple(shape)), requires_grad=True, name=name)


def ones(shape: Sequence[int], name: Optional[str] = None) -> Tensor:
    return Tensor(np.ones(tuple(shape)), requires_grad=True, name=name)
