"""Independently trained language and task adapters (the MAD-X baseline).

No invertible adapters: each layer stacks a language adapter and a task
adapter, each with its own residual.
"""
from typing import Dict, List, Optional

import numpy as np

from app.core.errors import UnknownSourceError
from app.models.domain import MLM_TASK, TaskLanguagePair
from app.numcore.init import normal, zeros
from app.numcore.tensor import Tensor
from app.providers.base import AdapterProvider, AdapterWeights, LayerAdapters, adapter_forward


def new_adapter(rng: np.random.Generator, hidden: int, bottleneck: int, layer: int, bias: bool = True) -> AdapterWeights:
    """Down-projection ~ N(0, 0.02^2), up-projection zero: starts as identity."""
    return AdapterWeights(
        D=normal(rng, (hidden, bottleneck)),
        U=zeros((bottleneck, hidden)),
        d_bias=zeros((bottleneck,)) if bias else None,
        u_bias=zeros((hidden,)) if bias else None,
        layer=layer,
    )


class StaticAdapterStack(LayerAdapters):
    """Language adapter then (optionally) task adapter at every layer."""

    def __init__(self, language: List[AdapterWeights], task: Optional[List[AdapterWeights]] = None) -> None:
        self.language = language
        self.task = task

    def apply(self, layer: int, z: Tensor) -> Tensor:
        return madx_forward(z, self, layer)

    def named(self) -> Dict[str, Tensor]:
        named = {f"language.{w.layer}.{part}": t for w in self.language for part, t in w.named().items()}
        for w in self.task or []:
            named.update({f"task.{w.layer}.{part}": t for part, t in w.named().items()})
        return named


def madx_forward(z: Tensor, stack: StaticAdapterStack, layer: int = 0) -> Tensor:
    out = adapter_forward(z, stack.language[layer])
    if stack.task is not None:
        out = adapter_forward(out, stack.task[layer])
    return out


class StaticAdapterProvider(AdapterProvider):
    """Per-language adapters trained with MLM and per-task adapters trained on the pivot."""

    def __init__(
        self,
        hidden: int,
        num_layers: int,
        language_bottleneck: int,
        task_bottleneck: int,
        task_language: str,
        rng: np.random.Generator,
    ) -> None:
        self.hidden = hidden
        self.num_layers = num_layers
        self.language_bottleneck = language_bottleneck
        self.task_bottleneck = task_bottleneck
        self.task_language = task_language
        self._rng = rng
        self.language_adapters: Dict[str, List[AdapterWeights]] = {}
        self.task_adapters: Dict[str, List[AdapterWeights]] = {}

    def add_language(self, language: str) -> None:
        self.language_adapters[language] = [
            new_adapter(self._rng, self.hidden, self.language_bottleneck, i) for i in range(self.num_layers)
        ]

    def add_task(self, task: str) -> None:
        self.task_adapters[task] = [
            new_adapter(self._rng, self.hidden, self.task_bottleneck, i) for i in range(self.num_layers)
        ]

    def adapters_for(self, pair: TaskLanguagePair) -> StaticAdapterStack:
        if pair.language not in self.language_adapters:
            raise UnknownSourceError(f"no language adapter for {pair.language!r}")
        if pair.is_mlm:
            return StaticAdapterStack(self.language_adapters[pair.language])
        if pair.task not in self.task_adapters:
            raise UnknownSourceError(f"no task adapter for {pair.task!r}")
        return StaticAdapterStack(self.language_adapters[pair.language], self.task_adapters[pair.task])

    def language_parameters(self, language: Optional[str] = None) -> Dict[str, Tensor]:
        named = {}
        for lang, stack in self.language_adapters.items():
            if language is None or lang == language:
                for w in stack:
                    for part, tensor in w.named().items():
                        named[f"adapter.{MLM_TASK}.{lang}.{w.layer}.{part}"] = tensor
        return named

    def task_parameters(self) -> Dict[str, Tensor]:
        named = {}
        for task, stack in self.task_adapters.items():
            for w in stack:
                for part, tensor in w.named().items():
                    named[f"adapter.{task}.{self.task_language}.{w.layer}.{part}"] = tensor
        return named

    def parameter_groups(self) -> Dict[str, Dict[str, Tensor]]:
        return {"language_adapters": self.language_parameters(), "task_adapters": self.task_parameters()}
