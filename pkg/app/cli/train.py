import argparse
from typing import List, Optional

import structlog

from app.cli.common import add_config_argument, invocation, load_backbone, load_context
from app.core.errors import UsageError
from app.core.runs import MANIFEST, write_json
from app.models.config import ExperimentConfig, component_seed
from app.models.domain import Partition, Regime, RegimeConfig, SystemName
from app.trainer.loop import train
from app.trainer.madx import train_madx
from app.trainer.partitions import regime_pairs
from app.trainer.systems import MadXSystem, build_system

logger = structlog.get_logger()


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("train", help="train one system under one regime")
    add_config_argument(parser)
    parser.add_argument("--regime", required=True, choices=[r.value for r in Regime])
    parser.add_argument("--partition", choices=[p.value for p in Partition], default=None)
    parser.add_argument("--system", choices=[s.value for s in SystemName], default=SystemName.HYPERX.value)
    parser.add_argument("--task", default=None, help="task for single_task (default: the only configured task)")
    parser.add_argument("--name", default=None, help="run directory name")
    parser.set_defaults(handler=run)


def select_tasks(config: ExperimentConfig, regime: Regime, task: Optional[str]) -> List[str]:
    tasks = list(config.regime.tasks)
    if task is not None:
        if task not in tasks:
            raise UsageError(f"--task {task!r} is not configured; expected one of {tasks}")
        if regime is not Regime.SINGLE_TASK:
            raise UsageError("--task only applies to the single_task regime")
        return [task]
    if regime is Regime.SINGLE_TASK:
        if len(tasks) != 1:
            raise UsageError(f"single_task needs --task, one of {tasks}")
    return tasks


def run_name(system: SystemName, regime: Regime, partition: Optional[Partition], tasks: List[str]) -> str:
    parts = [system.value, regime.value]
    if regime is Regime.SINGLE_TASK:
        parts.append(tasks[0])
    if partition is not None:
        parts.append(partition.value)
    return "-".join(parts)


def run(args: argparse.Namespace) -> int:
    regime = Regime(args.regime)
    partition = Partition(args.partition) if args.partition else None
    system_name = SystemName(args.system)
    if system_name is SystemName.MADX and regime is not Regime.SINGLE_TASK:
        raise UsageError("madx is trained on the pivot language only; use --regime single_task")

    context = load_context(args.config)
    config = context.config
    tasks = select_tasks(config, regime, args.task)
    family = context.family()
    train_pairs, eval_pairs = regime_pairs(
        regime,
        tasks,
        family.names,
        family.groups(),
        config.data.pivot,
        component_seed(config.seed, "partition"),
        partition,
        config.data.eval_only_languages,
    )
    section = config.regime
    plan = RegimeConfig(
        regime=regime,
        partition=partition,
        train_pairs=train_pairs,
        eval_pairs=eval_pairs,
        steps=section.steps,
        batch_size=section.batch_size,
        peak_lr=section.full_finetune_lr if system_name is SystemName.FULL_FINETUNE else section.peak_lr,
        warmup_steps=min(section.warmup_steps, section.steps),
        eval_every=section.eval_every,
        seed=config.seed,
        temperature=section.temperature,
        mlm_weight=section.mlm_weight,
        mask_rate=section.mask_rate,
    )

    backbone, vocab = load_backbone(context)
    system = build_system(system_name, backbone, vocab, config, tasks, family.names, config.data.pivot)
    bank = context.bank(family, vocab)
    name = args.name or run_name(system_name, regime, partition, tasks)
    run_dir = context.layout.create_run(name)
    options = dict(
        name=name,
        config=context.echo,
        run_dir=run_dir,
        check_invariants=context.settings.HYPERX_CHECK_INVARIANTS,
        backbone_path=str(context.layout.backbone),
    )
    if isinstance(system, MadXSystem):
        manifest = train_madx(system, plan, bank, config.madx, **options)
    else:
        manifest = train(system, plan, bank, **options)
    manifest = manifest.model_copy(update={"invocation": invocation(args)})
    write_json(run_dir / MANIFEST, manifest)
    logger.info("run finished", run=str(run_dir), best_step=manifest.best_step, best_score=manifest.best_score)
    print(run_dir)
    return 0
