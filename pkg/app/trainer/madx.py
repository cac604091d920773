"""Two-stage training for the static-adapter baseline."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import structlog

from app.core.errors import UsageError
from app.models.config import MadXConfig, component_seed
from app.models.domain import Regime, RegimeConfig, RunManifest
from app.numcore.optim import warmup_linear_decay
from app.trainer.data import DataBank
from app.trainer.loop import run_steps, train
from app.trainer.sampling import SamplingPlan
from app.trainer.systems import MadXSystem

logger = structlog.get_logger()


def train_madx(
    system: MadXSystem,
    regime: RegimeConfig,
    bank: DataBank,
    madx: MadXConfig,
    name: str = "run",
    config: Optional[Dict[str, Any]] = None,
    run_dir: Optional[Path] = None,
    check_invariants: bool = False,
    backbone_path: Optional[str] = None,
) -> RunManifest:
    """Language adapters by MLM, one language at a time, then task adapters on the pivot.

    Language adapters are frozen once the task stage starts.

    Args:
        system: a fresh MAD-X system
        regime: a single_task plan; its MLM pairs pick the languages to train
        bank: train and dev data
        madx: language steps and task epochs
        name: run name recorded in the manifest
        config: config echo for the manifest
        run_dir: where the best checkpoint and metrics go, if given
        check_invariants: verify the backbone stayed frozen after every step
        backbone_path: recorded in the manifest

    Returns:
        The task stage manifest, with the full regime and both stage lengths.

    Raises:
        UsageError: any regime but single_task; stacked static adapters have
            no multi-task or mixed-language training
    """
    if regime.regime is not Regime.SINGLE_TASK:
        raise UsageError(f"madx only supports the single_task regime, not {regime.regime.value}")
    max_len = system.backbone.config.max_seq_len
    rng = np.random.default_rng(component_seed(regime.seed, "dropout"))

    mlm_pairs = [p for p in regime.train_pairs if p.is_mlm]
    for index, pair in enumerate(mlm_pairs):
        system.set_stage("language", pair.language)
        plan = SamplingPlan.build(
            {pair: bank.dataset(pair, "train")},
            regime.batch_size,
            1.0,
            component_seed(regime.seed, "sampling") + index,
            max_len,
        )
        losses = run_steps(
            system,
            plan,
            madx.language_steps,
            lambda step: warmup_linear_decay(step, regime.warmup_steps, madx.language_steps, regime.peak_lr),
            rng,
            mask_rate=regime.mask_rate,
            check_invariants=check_invariants,
            run_dir=run_dir,
        )
        logger.info("language adapter trained", language=pair.language, loss=round(losses[-1], 4))

    system.set_stage("task")
    downstream = regime.downstream_train_pairs
    examples = max(len(bank.dataset(p, "train")) for p in downstream)
    task_steps = madx.task_epochs * math.ceil(examples / regime.batch_size)
    task_regime = regime.model_copy(
        update={"train_pairs": downstream, "steps": task_steps, "eval_every": min(regime.eval_every, task_steps)}
    )
    manifest = train(
        system,
        task_regime,
        bank,
        name=name,
        config=config,
        run_dir=run_dir,
        check_invariants=check_invariants,
        backbone_path=backbone_path,
    )
    system.set_stage(None)
    return manifest.model_copy(
        update={
            "census": system.census(),
            "regime": regime,
            "extra": {"task_steps": task_steps, "language_steps": madx.language_steps},
        }
    )
