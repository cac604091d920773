"""Masked language modelling: 80/10/10 masking and the loss."""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np

from app.backbone.model import Backbone
from app.backbone.vocab import FIRST_REGULAR_ID, MASK_ID
from app.core.errors import DegenerateBatchError
from app.numcore import ops
from app.numcore.tensor import Tensor

if TYPE_CHECKING:
    from app.providers.base import LayerAdapters

IGNORE = -1


@dataclass(frozen=True)
class MaskedBatch:
    inputs: np.ndarray
    targets: np.ndarray
    attention: np.ndarray

    @property
    def num_masked(self) -> int:
        return int((self.targets != IGNORE).sum())


def mask_tokens(
    token_ids: np.ndarray,
    attention: np.ndarray,
    mask_rate: float,
    rng: np.random.Generator,
    vocab_size: int,
) -> MaskedBatch:
    """Select about ``mask_rate`` of the real tokens (at least one).

    Selected positions become ``[MASK]`` 80% of the time, a random regular
    token 10%, and stay unchanged 10%.
    """
    if not 0.0 < mask_rate < 1.0:
        raise ValueError(f"mask_rate must lie in (0, 1), got {mask_rate}")
    token_ids = np.asarray(token_ids, dtype=np.int64)
    maskable = (np.asarray(attention) > 0) & (token_ids >= FIRST_REGULAR_ID)
    if not maskable.any():
        raise DegenerateBatchError("batch has no maskable positions")

    selected = maskable & (rng.random(token_ids.shape) < mask_rate)
    if not selected.any():
        candidates = np.flatnonzero(maskable)
        selected.flat[candidates[int(rng.integers(len(candidates)))]] = True

    targets = np.where(selected, token_ids, IGNORE)
    roll = rng.random(token_ids.shape)
    inputs = token_ids.copy()
    inputs[selected & (roll < 0.8)] = MASK_ID
    randomised = selected & (roll >= 0.8) & (roll < 0.9)
    inputs[randomised] = rng.integers(FIRST_REGULAR_ID, vocab_size, size=int(randomised.sum()))
    return MaskedBatch(inputs=inputs, targets=targets, attention=np.asarray(attention, dtype=np.float64))


def masked_loss(
    backbone: Backbone,
    batch: MaskedBatch,
    adapters: Optional["LayerAdapters"] = None,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Cross-entropy over the masked positions of an already-masked batch."""
    final = backbone.encode(batch.inputs, batch.attention, adapters=adapters, training=training, rng=rng)[-1]
    rows = np.flatnonzero(batch.targets.reshape(-1) != IGNORE)
    hidden = ops.index_rows(final.reshape(-1, backbone.config.hidden), rows)
    return ops.cross_entropy(backbone.mlm_logits(hidden), batch.targets.reshape(-1)[rows])


def mlm_loss(
    backbone: Backbone,
    token_ids: np.ndarray,
    attention: np.ndarray,
    mask_rate: float,
    rng: np.random.Generator,
    adapters: Optional["LayerAdapters"] = None,
    training: bool = False,
) -> Tensor:
    batch = mask_tokens(token_ids, attention, mask_rate, rng, backbone.config.vocab_size)
    return masked_loss(backbone, batch, adapters=adapters, training=training, rng=rng)
