"""Source projector and adapter generator.

Flat generator output, per layer, is laid out as
``D`` (h x b, row-major), ``d_bias`` (b), ``U`` (b x h, row-major), ``u_bias`` (h).
With biases disabled only ``D`` and ``U`` are emitted. Checkpoints depend on
this order.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import structlog

from app.core.errors import ConfigurationError
from app.hypernet.registry import SourceEmbeddingRegistry, SourceKind
from app.models.config import BackboneConfig, HypernetConfig
from app.numcore import ops
from app.numcore.init import normal, zeros
from app.numcore.serialize import load_named, save_named
from app.numcore.tensor import Tensor
from app.providers.base import AdapterWeights, adapter_param_count

logger = structlog.get_logger()

SOURCES = "sources.json"


class SourceProjector:
    """Two affine maps with a ReLU between: ``d_s -> hidden -> d_p``."""

    def __init__(self, source_dim: int, hidden: int, out_dim: int, rng: np.random.Generator, prefix: str = "hypernet.proj") -> None:
        self.w1 = normal(rng, (source_dim, hidden), name=f"{prefix}.w1")
        self.b1 = zeros((hidden,), name=f"{prefix}.b1")
        self.w2 = normal(rng, (hidden, out_dim), name=f"{prefix}.w2")
        self.b2 = zeros((out_dim,), name=f"{prefix}.b2")

    def __call__(self, sources: Tensor) -> Tensor:
        return ops.relu(sources @ self.w1 + self.b1) @ self.w2 + self.b2

    def named_parameters(self) -> Dict[str, Tensor]:
        return {t.name: t for t in (self.w1, self.b1, self.w2, self.b2)}


class AdapterGenerator:
    """Linear map from a projected source embedding to one flat adapter."""

    def __init__(
        self,
        in_dim: int,
        hidden: int,
        bottleneck: int,
        rng: np.random.Generator,
        bias: bool = True,
        init_std: float = 0.0,
        prefix: str = "hypernet.gen",
    ) -> None:
        self.hidden = hidden
        self.bottleneck = bottleneck
        self.bias = bias
        size = adapter_param_count(hidden, bottleneck, bias)
        self.w = normal(rng, (in_dim, size), init_std, name=f"{prefix}.w") if init_std > 0 else zeros((in_dim, size), name=f"{prefix}.w")
        self.b = zeros((size,), name=f"{prefix}.b")

    @property
    def adapter_size(self) -> int:
        return self.b.shape[0]

    def __call__(self, projected: Tensor) -> Tensor:
        return projected @ self.w + self.b

    def unpack(self, flat: Tensor, layer: int) -> AdapterWeights:
        """Split a ``(d_a,)`` vector into adapter weights without leaving the graph."""
        h, b = self.hidden, self.bottleneck
        cursor = 0

        def take(count: int, shape) -> Tensor:
            nonlocal cursor
            part = ops.slice_axis(flat, cursor, cursor + count, axis=-1).reshape(*shape)
            cursor += count
            return part

        D = take(h * b, (h, b))
        d_bias = take(b, (b,)) if self.bias else None
        U = take(b * h, (b, h))
        u_bias = take(h, (h,)) if self.bias else None
        return AdapterWeights(D=D, U=U, d_bias=d_bias, u_bias=u_bias, layer=layer)

    def named_parameters(self) -> Dict[str, Tensor]:
        return {self.w.name: self.w, self.b.name: self.b}


class HyperNetwork:
    """A single projector/generator pair serving every layer and every (task, language)."""

    def __init__(self, config: HypernetConfig, hidden: int, num_layers: int, rng: np.random.Generator) -> None:
        self.config = config
        self.hidden = hidden
        self.num_layers = num_layers
        self.registry = SourceEmbeddingRegistry(
            config.task_dim, config.language_dim, config.layer_dim, num_layers, rng, config.embedding_init_std
        )
        self.projector = SourceProjector(self.registry.source_dim, config.projector_hidden, config.projector_dim, rng)
        self.generator = AdapterGenerator(
            config.projector_dim, hidden, config.bottleneck, rng, config.adapter_bias, config.generator_init_std
        )

    @classmethod
    def for_backbone(cls, config: HypernetConfig, backbone: BackboneConfig, rng: np.random.Generator) -> "HyperNetwork":
        return cls(config, backbone.hidden, backbone.num_layers, rng)

    def check_backbone(self, backbone: BackboneConfig) -> None:
        """Raises ConfigurationError when generated adapters would not fit ``backbone``."""
        if backbone.hidden != self.hidden or backbone.num_layers != self.num_layers:
            raise ConfigurationError(
                f"hypernetwork built for hidden={self.hidden}, layers={self.num_layers}; "
                f"backbone has hidden={backbone.hidden}, layers={backbone.num_layers}"
            )

    def register_source(self, kind: Union[SourceKind, str], name: str) -> int:
        return self.registry.register(kind, name)

    def task_id(self, name: str) -> int:
        return self.registry.id_of(SourceKind.TASK, name)

    def language_id(self, name: str) -> int:
        return self.registry.id_of(SourceKind.LANGUAGE, name)

    def _source_row(self, task_id: int, language_id: int, layer: int) -> Tensor:
        return ops.concat(
            [
                self.registry.row(SourceKind.LANGUAGE, language_id),
                self.registry.row(SourceKind.TASK, task_id),
                self.registry.layer(layer),
            ]
        )

    def combine_sources(self, task_id: int, language_id: int, layer: int) -> Tensor:
        """Projected embedding ``P(s_lang + s_task + s_layer)`` (concatenation), shape ``(d_p,)``."""
        return self.projector(self._source_row(task_id, language_id, layer).reshape(1, -1)).reshape(-1)

    def generate_adapter(self, task_id: int, language_id: int, layer: int) -> AdapterWeights:
        projected = self.combine_sources(task_id, language_id, layer).reshape(1, -1)
        return self.generator.unpack(self.generator(projected).reshape(-1), layer)

    def generate_stack(self, task_id: int, language_id: int) -> List[AdapterWeights]:
        """All layers' adapters for one pair from one batched projection."""
        rows = ops.concat(
            [self._source_row(task_id, language_id, i).reshape(1, -1) for i in range(self.num_layers)], axis=0
        )
        flat = self.generator(self.projector(rows))
        return [
            self.generator.unpack(ops.slice_axis(flat, i, i + 1, axis=0).reshape(-1), i) for i in range(self.num_layers)
        ]

    def parameter_groups(self) -> Dict[str, Dict[str, Tensor]]:
        return {
            "embeddings": self.registry.named_parameters(),
            "projector": self.projector.named_parameters(),
            "generator": self.generator.named_parameters(),
        }

    def named_parameters(self) -> Dict[str, Tensor]:
        merged: Dict[str, Tensor] = {}
        for group in self.parameter_groups().values():
            merged.update(group)
        return merged

    def state_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {f"hypernet.{key}": table for key, table in self.registry.tables().items()}
        for tensor in (*self.projector.named_parameters().values(), *self.generator.named_parameters().values()):
            arrays[tensor.name] = tensor.data
        return arrays

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        self.registry.load_tables({key: arrays[f"hypernet.{key}"] for key in ("task_emb", "lang_emb", "layer_emb")})
        for tensor in (*self.projector.named_parameters().values(), *self.generator.named_parameters().values()):
            tensor.data = np.array(arrays[tensor.name], dtype=np.float64)

    def save(self, directory: Union[str, Path]) -> Path:
        """Tensors plus a ``sources.json`` naming every embedding row."""
        directory = Path(directory)
        save_named(directory, self.state_arrays())
        sources = {
            "config": self.config.model_dump(),
            "hidden": self.hidden,
            "num_layers": self.num_layers,
            "tasks": self.registry.names(SourceKind.TASK),
            "languages": self.registry.names(SourceKind.LANGUAGE),
        }
        (directory / SOURCES).write_text(json.dumps(sources, indent=2), encoding="utf-8")
        return directory

    @classmethod
    def load(cls, directory: Union[str, Path], rng: Optional[np.random.Generator] = None) -> "HyperNetwork":
        directory = Path(directory)
        if not (directory / SOURCES).exists():
            raise ConfigurationError(f"no hypernetwork checkpoint at {directory}")
        sources = json.loads((directory / SOURCES).read_text(encoding="utf-8"))
        network = cls(HypernetConfig(**sources["config"]), sources["hidden"], sources["num_layers"],
                      rng or np.random.default_rng(0))
        for name in sources["tasks"]:
            network.register_source(SourceKind.TASK, name)
        for name in sources["languages"]:
            network.register_source(SourceKind.LANGUAGE, name)
        network.load_state_arrays(load_named(directory))
        logger.info("hypernetwork loaded", path=str(directory), tasks=len(sources["tasks"]),
                    languages=len(sources["languages"]))
        return network
