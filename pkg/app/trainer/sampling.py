"""Temperature-scaled pair sampling with homogeneous mini-batches."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
import structlog

from app.backbone.vocab import pad_batch
from app.core.errors import ContractError, SamplingError
from app.models.domain import TaskLanguagePair
from app.trainer.data import IGNORE, PairDataset

logger = structlog.get_logger()


@dataclass(frozen=True)
class Batch:
    pair: TaskLanguagePair
    ids: np.ndarray
    attention: np.ndarray
    # (batch, seq) label ids, IGNORE at padding; None for MLM
    labels: Optional[np.ndarray]
    # pair tag of every row; a homogeneous batch has one distinct value
    row_pairs: Tuple[TaskLanguagePair, ...] = ()

    def __len__(self) -> int:
        return self.ids.shape[0]


def sampling_weights(sizes: List[int], temperature: float) -> np.ndarray:
    """``size ** temperature``, normalised; ``temperature=1`` is size-proportional."""
    if not sizes:
        raise SamplingError("cannot sample from an empty plan")
    if temperature <= 0:
        raise SamplingError(f"temperature must be positive, got {temperature}")
    if min(sizes) <= 0:
        raise SamplingError("every pair in a sampling plan needs at least one example")
    raw = np.power(np.asarray(sizes, dtype=np.float64), temperature)
    return raw / raw.sum()


def collate(dataset: PairDataset, indices: np.ndarray, max_len: int) -> Batch:
    """Pad the chosen rows; each row is tagged with its own sentence's language."""
    ids, attention = pad_batch([dataset.ids[i] for i in indices], max_len)
    labels = None
    if dataset.has_labels:
        labels = np.full(ids.shape, IGNORE, dtype=np.int64)
        for row, i in enumerate(indices):
            labels[row, : len(dataset.labels[i])] = dataset.labels[i]
    task = dataset.pair.task
    rows = tuple(TaskLanguagePair(task=task, language=dataset.sentences[i].language) for i in indices)
    return Batch(dataset.pair, ids, attention, labels, rows)


@dataclass
class SamplingPlan:
    """Per-pair datasets, their weights, and one deterministic sampling stream."""

    datasets: Dict[TaskLanguagePair, PairDataset]
    batch_size: int
    temperature: float
    seed: int
    max_len: int
    weights: np.ndarray = field(init=False)
    pairs: List[TaskLanguagePair] = field(init=False)
    epochs: Dict[TaskLanguagePair, int] = field(init=False)
    _rng: np.random.Generator = field(init=False, repr=False)
    _orders: Dict[TaskLanguagePair, np.ndarray] = field(init=False, repr=False)
    _cursors: Dict[TaskLanguagePair, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.pairs = list(self.datasets)
        self.weights = sampling_weights([len(self.datasets[p]) for p in self.pairs], self.temperature)
        self._rng = np.random.default_rng(self.seed)
        self._orders = {p: self._rng.permutation(len(self.datasets[p])) for p in self.pairs}
        self._cursors = {p: 0 for p in self.pairs}
        self.epochs = {p: 0 for p in self.pairs}

    @classmethod
    def build(
        cls,
        datasets: Mapping[TaskLanguagePair, PairDataset],
        batch_size: int,
        temperature: float,
        seed: int,
        max_len: int,
    ) -> "SamplingPlan":
        return cls(dict(datasets), batch_size, temperature, seed, max_len)

    def draw_pair(self) -> TaskLanguagePair:
        return self.pairs[int(self._rng.choice(len(self.pairs), p=self.weights))]

    def take(self, pair: TaskLanguagePair) -> np.ndarray:
        """Next indices for ``pair``; reshuffles at the end of an epoch."""
        size = min(self.batch_size, len(self.datasets[pair]))
        if self._cursors[pair] + size > len(self._orders[pair]):
            self._orders[pair] = self._rng.permutation(len(self.datasets[pair]))
            self._cursors[pair] = 0
            self.epochs[pair] += 1
            logger.debug("epoch boundary", pair=str(pair), epoch=self.epochs[pair])
        start = self._cursors[pair]
        self._cursors[pair] = start + size
        return self._orders[pair][start : start + size]


def next_batch(plan: SamplingPlan) -> Tuple[TaskLanguagePair, Batch]:
    """Draw a pair, then a batch made only of that pair's examples."""
    pair = plan.draw_pair()
    return pair, collate(plan.datasets[pair], plan.take(pair), plan.max_len)


def check_homogeneous(batch: Batch) -> None:
    distinct = set(batch.row_pairs)
    if distinct != {batch.pair}:
        raise ContractError(f"batch for {batch.pair} mixes pairs: {sorted(map(str, distinct))}")
