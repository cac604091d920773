"""Learned embeddings for tasks, languages and layers."""
from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pandas as pd
import structlog

from app.core.errors import RegistrationError, UnknownSourceError
from app.numcore.init import normal
from app.numcore.tensor import Tensor

logger = structlog.get_logger()


class SourceKind(str, Enum):
    TASK = "task"
    LANGUAGE = "language"


class SourceEmbeddingRegistry:
    """One embedding row per registered task and language, one per layer.

    Rows are separate tensors so a batch only touches (and only updates) the
    rows it actually reads.
    """

    def __init__(
        self,
        task_dim: int,
        language_dim: int,
        layer_dim: int,
        num_layers: int,
        rng: np.random.Generator,
        init_std: float = 0.02,
    ) -> None:
        self.dims = {SourceKind.TASK: task_dim, SourceKind.LANGUAGE: language_dim}
        self.layer_dim = layer_dim
        self.init_std = init_std
        self._rng = rng
        self._index: Dict[SourceKind, Dict[str, int]] = {SourceKind.TASK: {}, SourceKind.LANGUAGE: {}}
        self._rows: Dict[SourceKind, List[Tensor]] = {SourceKind.TASK: [], SourceKind.LANGUAGE: []}
        self.layers: List[Tensor] = [
            normal(rng, (layer_dim,), init_std, name=f"hypernet.layer_emb.{i}") for i in range(num_layers)
        ]

    @property
    def source_dim(self) -> int:
        return self.dims[SourceKind.TASK] + self.dims[SourceKind.LANGUAGE] + self.layer_dim

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def register(self, kind: Union[SourceKind, str], name: str) -> int:
        """Add a fresh embedding row; ids are assigned in registration order.

        Raises:
            RegistrationError: ``name`` is already registered under ``kind``
        """
        kind = SourceKind(kind)
        if name in self._index[kind]:
            raise RegistrationError(f"{kind.value} {name!r} is already registered")
        source_id = len(self._rows[kind])
        tag = "task_emb" if kind is SourceKind.TASK else "lang_emb"
        self._rows[kind].append(normal(self._rng, (self.dims[kind],), self.init_std, name=f"hypernet.{tag}.{name}"))
        self._index[kind][name] = source_id
        logger.debug("source registered", kind=kind.value, name=name, id=source_id)
        return source_id

    def names(self, kind: Union[SourceKind, str]) -> List[str]:
        kind = SourceKind(kind)
        return sorted(self._index[kind], key=self._index[kind].__getitem__)

    def id_of(self, kind: Union[SourceKind, str], name: str) -> int:
        kind = SourceKind(kind)
        try:
            return self._index[kind][name]
        except KeyError:
            raise UnknownSourceError(f"unknown {kind.value} {name!r}") from None

    def row(self, kind: Union[SourceKind, str], source_id: int) -> Tensor:
        kind = SourceKind(kind)
        rows = self._rows[kind]
        if not 0 <= source_id < len(rows):
            raise UnknownSourceError(f"{kind.value} id {source_id} out of range (have {len(rows)})")
        return rows[source_id]

    def layer(self, index: int) -> Tensor:
        if not 0 <= index < len(self.layers):
            raise UnknownSourceError(f"layer {index} out of range (have {len(self.layers)})")
        return self.layers[index]

    def named_parameters(self) -> Dict[str, Tensor]:
        named: Dict[str, Tensor] = {}
        for rows in self._rows.values():
            named.update({t.name: t for t in rows})
        named.update({t.name: t for t in self.layers})
        return named

    def tables(self) -> Dict[str, np.ndarray]:
        """Stacked ``(rows, dim)`` arrays, in id order."""
        def stack(rows: List[Tensor], dim: int) -> np.ndarray:
            return np.stack([t.data for t in rows]) if rows else np.zeros((0, dim))

        return {
            "task_emb": stack(self._rows[SourceKind.TASK], self.dims[SourceKind.TASK]),
            "lang_emb": stack(self._rows[SourceKind.LANGUAGE], self.dims[SourceKind.LANGUAGE]),
            "layer_emb": stack(self.layers, self.layer_dim),
        }

    def load_tables(self, tables: Dict[str, np.ndarray]) -> None:
        for kind, key in ((SourceKind.TASK, "task_emb"), (SourceKind.LANGUAGE, "lang_emb")):
            if tables[key].shape[0] != len(self._rows[kind]):
                raise RegistrationError(
                    f"{key} has {tables[key].shape[0]} rows but {len(self._rows[kind])} {kind.value}s are registered"
                )
            for row, values in zip(self._rows[kind], tables[key]):
                row.data = np.array(values, dtype=np.float64)
        for row, values in zip(self.layers, tables["layer_emb"]):
            row.data = np.array(values, dtype=np.float64)

    def to_frame(self, kind: Union[SourceKind, str]) -> pd.DataFrame:
        kind = SourceKind(kind)
        table = self.tables()["task_emb" if kind is SourceKind.TASK else "lang_emb"]
        return pd.DataFrame(table, index=pd.Index(self.names(kind), name=kind.value),
                            columns=[f"d{i}" for i in range(table.shape[1])])

    def export_csv(self, kind: Union[SourceKind, str], path: Union[str, Path]) -> Path:
        """One row per source name, one column per embedding dimension."""
        path = Path(path)
        self.to_frame(kind).to_csv(path)
        return path
