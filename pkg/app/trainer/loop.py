"""Training loop, validation and best-checkpoint selection."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
import structlog

from app.core.errors import ConfigurationError, ContractError, NumericalError, TrainingAborted
from app.core.runs import BEST, METRICS, append_jsonl, git_describe
from app.evalkit.metrics import score_tags
from app.models.config import component_seed
from app.models.domain import MetricRecord, RegimeConfig, RunManifest, TaskLanguagePair
from app.numcore.optim import Adam, warmup_linear_decay
from app.numcore.tensor import Tensor, backward
from app.trainer.data import DataBank, PairDataset
from app.trainer.sampling import Batch, SamplingPlan, check_homogeneous, next_batch
from app.trainer.systems import TaggingSystem

logger = structlog.get_logger()

NAN_DUMP = "nan_dump.json"
LrSchedule = Callable[[int], float]


def _dump_batch(run_dir: Optional[Path], step: int, batch: Batch, error: Exception) -> Optional[Path]:
    if run_dir is None:
        return None
    path = run_dir / NAN_DUMP
    payload = {
        "step": step,
        "pair": str(batch.pair),
        "error": str(error),
        "ids": batch.ids.tolist(),
        "attention": batch.attention.tolist(),
        "labels": None if batch.labels is None else batch.labels.tolist(),
    }
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def run_steps(
    system: TaggingSystem,
    plan: SamplingPlan,
    steps: int,
    lr_at: LrSchedule,
    rng: np.random.Generator,
    mlm_weight: float = 1.0,
    mask_rate: float = 0.15,
    check_invariants: bool = False,
    head_task: Optional[str] = None,
    run_dir: Optional[Path] = None,
    on_step: Optional[Callable[[int], None]] = None,
    params: Optional[Mapping[str, Tensor]] = None,
) -> List[float]:
    """Optimise ``system.trainable_parameters()`` for ``steps`` homogeneous batches.

    ``params`` narrows the update to a subset, e.g. a fresh output head.

    Raises:
        TrainingAborted: a loss or activation went non-finite; the batch is dumped
    """
    optimizer = Adam(params if params is not None else system.trainable_parameters())
    losses: List[float] = []
    for step in range(1, steps + 1):
        pair, batch = next_batch(plan)
        if check_invariants:
            check_homogeneous(batch)
        optimizer.zero_grad()
        try:
            loss = system.loss(batch, rng, mlm_weight, mask_rate, training=True, head_task=head_task)
            backward(loss)
        except NumericalError as exc:
            dump = _dump_batch(run_dir, step, batch, exc)
            logger.error("non-finite loss", step=step, pair=str(pair), dump=str(dump) if dump else None)
            raise TrainingAborted(f"non-finite values at step {step} on {pair}: {exc}") from exc
        optimizer.step(lr_at(step))
        losses.append(loss.item())
        if on_step is not None:
            on_step(step)
    return losses


def validate(
    system: TaggingSystem, datasets: Mapping[TaskLanguagePair, PairDataset], step: int
) -> Tuple[List[MetricRecord], Optional[float]]:
    """Dev metric per pair and their unweighted mean (None when nothing to score)."""
    records = []
    for pair, dataset in datasets.items():
        metric, value, _ = score_tags(dataset.label_task or pair.task, system.predict(dataset), dataset.gold())
        records.append(MetricRecord(step=step, pair=str(pair), metric=metric, value=value))
    score = float(np.mean([r.value for r in records])) if records else None
    return records, score


def train(
    system: TaggingSystem,
    regime: RegimeConfig,
    bank: DataBank,
    name: str = "run",
    config: Optional[Dict[str, Any]] = None,
    run_dir: Optional[Path] = None,
    check_invariants: bool = False,
    backbone_path: Optional[str] = None,
) -> RunManifest:
    """Train one regime, validating every ``eval_every`` steps and keeping the best checkpoint.

    The best parameters are restored into ``system`` before returning.

    Args:
        system: the system to train in place
        regime: pairs, steps, batch size, schedule and seed
        bank: train and dev data
        name: run name recorded in the manifest
        config: config echo for the manifest
        run_dir: where ``best/`` and the metrics log go, if given
        check_invariants: verify the backbone stayed frozen after every step
        backbone_path: recorded in the manifest

    Returns:
        The run manifest with the dev metric history and the best step.

    Raises:
        ConfigurationError: no train pair is usable by this system
        ContractError: frozen backbone weights changed (checked under ``check_invariants``)
        TrainingAborted: see ``run_steps``
    """
    pairs = [p for p in regime.train_pairs if system.supports(p)]
    if not pairs:
        raise ConfigurationError(f"{system.name.value} has nothing to train on in {regime.regime.value}")
    max_len = system.backbone.config.max_seq_len
    plan = SamplingPlan.build(
        bank.datasets(pairs, "train"),
        regime.batch_size,
        regime.temperature,
        component_seed(regime.seed, "sampling"),
        max_len,
    )
    dev = bank.datasets([p for p in pairs if not p.is_mlm], "dev")
    fingerprint = system.backbone.frozen_fingerprint() if check_invariants and system.backbone.frozen else None

    history: List[MetricRecord] = []
    best: Dict[str, Any] = {"step": None, "score": None, "snapshot": None}
    metrics_path = run_dir / METRICS if run_dir is not None else None

    def evaluate(step: int) -> None:
        if step % regime.eval_every and step != regime.steps:
            return
        records, score = validate(system, dev, step)
        history.extend(records)
        if metrics_path is not None:
            append_jsonl(metrics_path, records)
        logger.info("eval", step=step, score=None if score is None else round(score, 4))
        if score is not None and (best["score"] is None or score > best["score"]):
            best.update(step=step, score=score, snapshot=system.snapshot())
            if run_dir is not None:
                system.save(run_dir / BEST)
            logger.info("best checkpoint", step=step, score=round(score, 4))

    logger.info("train", system=system.name.value, regime=regime.regime.value, pairs=len(pairs), steps=regime.steps)
    run_steps(
        system,
        plan,
        regime.steps,
        lambda step: warmup_linear_decay(step, regime.warmup_steps, regime.steps, regime.peak_lr),
        np.random.default_rng(component_seed(regime.seed, "dropout")),
        regime.mlm_weight,
        regime.mask_rate,
        check_invariants,
        run_dir=run_dir,
        on_step=evaluate,
    )
    if best["snapshot"] is not None:
        system.restore(best["snapshot"])
    elif run_dir is not None:
        system.save(run_dir / BEST)
    if fingerprint is not None and system.backbone.frozen_fingerprint() != fingerprint:
        raise ContractError("frozen backbone weights changed during training")

    return RunManifest(
        name=name,
        system=system.name,
        regime=regime,
        config=config or {},
        seed=regime.seed,
        git_describe=git_describe(),
        census=system.census(),
        metric_history=history,
        best_step=best["step"],
        best_score=best["score"],
        best_checkpoint=str(run_dir / BEST) if run_dir is not None else None,
        backbone_path=backbone_path,
    )
