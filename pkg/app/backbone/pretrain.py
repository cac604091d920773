from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Collection, List, Optional, Sequence, Union

import numpy as np
import structlog

from app.backbone.checkpoint import save_checkpoint
from app.backbone.mlm import mlm_loss
from app.backbone.model import Backbone
from app.backbone.vocab import Vocabulary, pad_batch
from app.core.errors import ContaminationError
from app.models.config import BackboneConfig, PretrainConfig
from app.numcore.optim import Adam, warmup_linear_decay
from app.numcore.tensor import backward
from app.synthdata.corpus import AnnotatedSentence

logger = structlog.get_logger()


def corpus_hash(corpus: Sequence[AnnotatedSentence]) -> str:
    digest = hashlib.sha256()
    for sentence in corpus:
        digest.update(sentence.language.encode("utf-8"))
        digest.update("\x1f".join(sentence.tokens).encode("utf-8"))
        digest.update(b"\x1e")
    return digest.hexdigest()[:16]


def pretrain(
    corpus: Sequence[AnnotatedSentence],
    config: BackboneConfig,
    steps: int,
    seed: int,
    vocab: Vocabulary,
    seen_languages: Collection[str],
    schedule: Optional[PretrainConfig] = None,
    out_dir: Optional[Union[str, Path]] = None,
) -> Backbone:
    """MLM-pretrain a fresh backbone on seen languages, then freeze it.

    Sentences longer than ``config.max_seq_len`` are cut, and the count is logged.

    Args:
        corpus: pretraining sentences, all from ``seen_languages``
        config: backbone dimensions
        steps: optimizer steps
        seed: initialisation and masking seed
        vocab: shared vocabulary over every language
        seen_languages: languages allowed in the corpus
        schedule: batch size, mask rate and learning-rate schedule
        out_dir: where to save the checkpoint and loss curve, if given

    Returns:
        The frozen backbone, with ``training_losses`` set.

    Raises:
        ContaminationError: a sentence is tagged with a held-out language
    """
    leaked = sorted({s.language for s in corpus} - set(seen_languages))
    if leaked:
        raise ContaminationError(f"pretraining corpus contains held-out language(s): {', '.join(leaked)}")
    schedule = schedule or PretrainConfig(steps=steps)

    backbone = Backbone(config, np.random.default_rng(seed))
    optimizer = Adam(backbone.trainable_parameters())
    rng = np.random.default_rng(seed + 1)
    encoded = [vocab.encode(s.tokens)[: config.max_seq_len] for s in corpus]
    truncated = sum(len(s) > config.max_seq_len for s in corpus)
    if truncated:
        logger.warning("pretrain sentences truncated", count=truncated, max_len=config.max_seq_len)

    losses: List[float] = []
    size = min(schedule.batch_size, len(encoded))
    order = rng.permutation(len(encoded))
    cursor = 0
    for step in range(1, steps + 1):
        if cursor + size > len(order):
            order = rng.permutation(len(encoded))
            cursor = 0
            logger.debug("pretrain epoch boundary", step=step)
        picked = order[cursor : cursor + size]
        cursor += size
        ids, mask = pad_batch([encoded[i] for i in picked], config.max_seq_len)

        optimizer.zero_grad()
        loss = mlm_loss(backbone, ids, mask, schedule.mask_rate, rng, training=True)
        backward(loss)
        optimizer.step(warmup_linear_decay(step, schedule.warmup_steps, steps, schedule.peak_lr))
        losses.append(loss.item())
        if step == 1 or step % 100 == 0 or step == steps:
            logger.info("pretrain", step=step, loss=round(loss.item(), 4))

    backbone.freeze()
    backbone.training_losses = losses
    if out_dir is not None:
        out_dir = Path(out_dir)
        save_checkpoint(backbone, vocab, out_dir, seed=seed, steps=steps, corpus_hash=corpus_hash(corpus))
        with (out_dir / "loss_curve.jsonl").open("w", encoding="utf-8") as handle:
            for step, value in enumerate(losses, 1):
                handle.write(json.dumps({"step": step, "loss": value}) + "\n")
    return backbone
