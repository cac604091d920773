from typing import Dict, Sequence, Tuple

import numpy as np

from app.numcore.init import normal, zeros
from app.numcore.tensor import Tensor


class TaskHead:
    """Linear softmax layer over the final hidden states."""

    def __init__(self, task: str, hidden: int, labels: Sequence[str], rng: np.random.Generator) -> None:
        self.task = task
        self.labels: Tuple[str, ...] = tuple(labels)
        self.w = normal(rng, (hidden, len(self.labels)), name=f"head.{task}.w")
        self.b = zeros((len(self.labels),), name=f"head.{task}.b")

    def __call__(self, rows: Tensor) -> Tensor:
        return rows @ self.w + self.b

    def named_parameters(self) -> Dict[str, Tensor]:
        return {self.w.name: self.w, self.b.name: self.b}

    def decode(self, label_ids: Sequence[int]) -> Tuple[str, ...]:
        return tuple(self.labels[i] for i in label_ids)
