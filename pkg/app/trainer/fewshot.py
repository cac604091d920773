"""Few-shot fine-tuning of a zero-shot model on one target pair."""
from __future__ import annotations

import hashlib
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import structlog

from app.core.errors import SamplingError
from app.core.runs import BEST, git_describe
from app.evalkit.metrics import score_tags
from app.models.config import FewShotConfig, component_seed
from app.models.domain import FewShotMode, MetricRecord, RegimeConfig, RunManifest, TaskLanguagePair
from app.numcore.optim import constant
from app.trainer.data import NEW_LABEL_TASK, NEW_LABELS, DataBank, PairDataset, encode_dataset, merge_entity_types
from app.trainer.loop import run_steps
from app.trainer.sampling import SamplingPlan
from app.trainer.systems import TaggingSystem

logger = structlog.get_logger()


def _stream_seed(seed: int, pair: TaskLanguagePair, k: int, mode: FewShotMode) -> int:
    digest = hashlib.blake2b(f"{pair}|{k}|{mode.value}".encode("utf-8"), digest_size=4).digest()
    return component_seed(seed, "fewshot") + int.from_bytes(digest, "little")


def sample_instances(pool: PairDataset, k: int, rng: np.random.Generator) -> PairDataset:
    """``k`` examples regardless of their labels.

    Raises:
        SamplingError: the pool holds fewer than ``k`` examples
    """
    if k > len(pool):
        raise SamplingError(f"asked for {k} examples of {pool.pair} but only {len(pool)} exist")
    return pool.subset(sorted(rng.choice(len(pool), size=k, replace=False).tolist()))


def sample_shots(pool: PairDataset, shots: int, rng: np.random.Generator) -> PairDataset:
    """``shots`` sentences per entity type in the pool's label set.

    Raises:
        SamplingError: some type occurs in fewer than ``shots`` sentences
    """
    chosen: List[int] = []
    gold = pool.gold()
    types = sorted({tag[2:] for tag in NEW_LABELS if tag != "O"})
    for kind in types:
        candidates = [i for i, tags in enumerate(gold) if f"B-{kind}" in tags and i not in chosen]
        if len(candidates) < shots:
            raise SamplingError(f"only {len(candidates)} sentences contain {kind}; need {shots}")
        chosen.extend(rng.choice(candidates, size=shots, replace=False).tolist())
    return pool.subset(sorted(chosen))


def new_label_dataset(bank: DataBank, pair: TaskLanguagePair, split: str) -> PairDataset:
    """The pair's sentences with every entity type merged into one."""
    source = bank.dataset(pair, split)
    merged = [merge_entity_types(s) for s in source.sentences]
    return encode_dataset(pair, merged, bank.vocab, bank.max_len, label_task=NEW_LABEL_TASK)


def _score(system: TaggingSystem, dataset: PairDataset) -> Tuple[str, float]:
    metric, value, _ = score_tags(dataset.label_task or dataset.pair.task, system.predict(dataset), dataset.gold())
    return metric, value


def fewshot_finetune(
    system: TaggingSystem,
    pair: TaskLanguagePair,
    k: int,
    mode: FewShotMode,
    bank: DataBank,
    fewshot: FewShotConfig,
    base_regime: RegimeConfig,
    name: str = "fewshot",
    config: Optional[Dict[str, Any]] = None,
    run_dir: Optional[Path] = None,
    backbone_path: Optional[str] = None,
) -> RunManifest:
    """Fine-tune on ``k`` target examples (or ``k`` shots per label) and score on test.

    The system is returned to its zero-shot state afterwards, so sweeps over
    ``k`` always start from the same model. ``k=0`` trains nothing.

    Args:
        system: a trained zero-shot system, restored before returning
        pair: target pair; in new-label mode only its language is used
        k: examples, or shots per label in new-label mode
        mode: existing task or new label set
        bank: train pool and test data
        fewshot: learning rate, epochs and batch size
        base_regime: the source run's regime, for the seed and the manifest

    Returns:
        A manifest whose ``extra`` holds ``score`` and ``zero_shot_score``.

    Raises:
        SamplingError: not enough training data for ``k``
    """
    rng = np.random.default_rng(_stream_seed(base_regime.seed, pair, k, mode))
    new_labels = mode is FewShotMode.NEW_LABEL_SET
    if new_labels:
        pair = TaskLanguagePair(task=fewshot.new_label_base_task, language=pair.language)
        system.add_head(NEW_LABEL_TASK, NEW_LABELS)
        pool, test = new_label_dataset(bank, pair, "train"), new_label_dataset(bank, pair, "test")
    else:
        pool, test = bank.dataset(pair, "train"), bank.dataset(pair, "test")

    snapshot = system.snapshot()
    metric, before = _score(system, test)
    history = [MetricRecord(step=0, pair=str(pair), metric=metric, value=before)]
    steps = 0
    if k > 0:
        shots = sample_shots(pool, k, rng) if new_labels else sample_instances(pool, k, rng)
        steps = fewshot.epochs * math.ceil(len(shots) / fewshot.batch_size)
        plan = SamplingPlan.build({pair: shots}, fewshot.batch_size, 1.0, int(rng.integers(2**31)), bank.max_len)
        head_task = NEW_LABEL_TASK if new_labels else None
        params = system.heads[NEW_LABEL_TASK].named_parameters() if new_labels else None
        run_steps(
            system,
            plan,
            steps,
            lambda step: constant(step, fewshot.lr),
            rng,
            head_task=head_task,
            run_dir=run_dir,
            params=params,
        )
        metric, after = _score(system, test)
        history.append(MetricRecord(step=steps, pair=str(pair), metric=metric, value=after))
    else:
        after = before
    logger.info("fewshot", pair=str(pair), k=k, mode=mode.value, before=round(before, 4), after=round(after, 4))

    if run_dir is not None and k > 0:
        system.save(run_dir / BEST)
    system.restore(snapshot)
    for tensor in system.trainable_parameters().values():
        tensor.zero_grad()
    if new_labels:
        system.remove_head(NEW_LABEL_TASK)

    regime = base_regime.model_copy(
        update={"train_pairs": [pair], "eval_pairs": [pair], "steps": max(steps, 1), "peak_lr": fewshot.lr,
                "warmup_steps": 0, "batch_size": fewshot.batch_size}
    )
    return RunManifest(
        name=name,
        system=system.name,
        regime=regime,
        config=config or {},
        seed=base_regime.seed,
        git_describe=git_describe(),
        census=system.census(),
        metric_history=history,
        best_step=steps,
        best_score=after,
        best_checkpoint=str(run_dir / BEST) if run_dir is not None and k > 0 else None,
        backbone_path=backbone_path,
        extra={"k": k, "mode": mode.value, "pair": str(pair), "zero_shot_score": before, "score": after},
    )
