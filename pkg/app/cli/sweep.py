"""Multi-seed sweep of the full pipeline, summarized as directional checks."""
import argparse
import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import structlog

from app.cli import evaluate, fewshot, pretrain, train
from app.cli.common import Context, invocation, load_backbone, load_context
from app.core.errors import AcceptanceFailure, UsageError
from app.core.runs import read_manifest, write_json
from app.evalkit.acceptance import (
    ENGLISH_ONLY,
    FULL_FINETUNE,
    MADX,
    MIXED,
    BaselineCheck,
    SeedOutcome,
    combine_reports,
    majority_score,
    outcomes_frame,
    pair_mean,
    summarize,
)
from app.evalkit.reports import report_label, write_reports
from app.models.domain import (
    MLM_TASK,
    EvalReport,
    FewShotMode,
    Partition,
    Regime,
    RegimeConfig,
    RunManifest,
    SystemName,
    TaskLanguagePair,
)

logger = structlog.get_logger()

SEED_CONFIG = "experiment.json"
SUMMARY = "acceptance.json"


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("sweep", help="run the whole pipeline over several seeds and check the expected orderings")
    parser.add_argument("config", type=Path, help="experiment TOML")
    parser.add_argument("--seeds", nargs="+", type=int, default=[1, 2, 3, 4, 5])
    parser.add_argument("--k", nargs="+", type=int, default=None, help="few-shot k values (default: 0 plus fewshot.k_values)")
    parser.add_argument("--name", default="acceptance", help="sweep directory name")
    parser.add_argument("--strict", action="store_true", help="exit 3 when a criterion fails")
    parser.set_defaults(handler=run)


def _dispatch(module, argv: List[str]) -> None:
    """Run one subcommand exactly as ``hyperx`` would parse it."""
    parser = argparse.ArgumentParser(prog="hyperx")
    module.register(parser.add_subparsers(dest="command", required=True))
    args = parser.parse_args(argv)
    args.handler(args)


def _train_runs(config_path: str, tasks: Sequence[str]) -> Dict[str, List[List[str]]]:
    """Report label -> train invocations whose reports make up that label."""

    def single(system: SystemName) -> List[List[str]]:
        return [
            ["train", config_path, "--regime", "single_task", "--task", task, "--system", system.value]
            for task in tasks
        ]

    return {
        MIXED: [["train", config_path, "--regime", "mixed_language", "--partition", Partition.A.value]],
        ENGLISH_ONLY: [["train", config_path, "--regime", "multi_task"]],
        FULL_FINETUNE: single(SystemName.FULL_FINETUNE),
        MADX: single(SystemName.MADX),
    }


def _run_dir(context: Context, argv: List[str]) -> Path:
    opts = dict(zip(argv[2::2], argv[3::2]))
    regime = Regime(opts["--regime"])
    system = SystemName(opts.get("--system", SystemName.HYPERX.value))
    partition = Partition(opts["--partition"]) if "--partition" in opts else None
    tasks = [opts["--task"]] if "--task" in opts else list(context.config.regime.tasks)
    return context.layout.run(train.run_name(system, regime, partition, tasks))


def mlm_only_languages(regime: RegimeConfig) -> List[str]:
    """Languages with MLM data but no downstream supervision in ``regime``."""
    supervised = {p.language for p in regime.downstream_train_pairs}
    return [p.language for p in regime.train_pairs if p.task == MLM_TASK and p.language not in supervised]


def run_seed(config_path: Path, ks: Sequence[int], args: Dict) -> SeedOutcome:
    """Pretrain, train every system, evaluate and fine-tune for one seed's config."""
    path = str(config_path)
    _dispatch(pretrain, ["pretrain", path])
    context = load_context(config_path)
    runs = _train_runs(path, context.config.regime.tasks)
    reports: Dict[str, EvalReport] = {}
    run_dirs: Dict[str, Path] = {}
    for label, invocations in runs.items():
        parts = []
        for argv in invocations:
            _dispatch(train, argv)
            run_dir = _run_dir(context, argv)
            run_dirs.setdefault(label, run_dir)
            parts.append(evaluate.evaluate_run(run_dir))
        reports[label] = parts[0] if len(parts) == 1 else combine_reports(parts, parts[0].regime)

    out_dir = context.layout.create(context.layout.report("sweep"))
    for label, report in reports.items():
        write_json(out_dir / f"{evaluate.REPORT_PREFIX}{label.replace(':', '-')}.json", report)
    write_reports(list(reports.values()), out_dir)

    mixed = reports[MIXED]
    unseen = [f"{s.task}/{s.language}" for s in mixed.scores if s.zero_shot]
    aggregates = {report_label(r): pair_mean(r, unseen) for r in reports.values()}

    _, vocab = load_backbone(context)
    bank = context.bank(context.family(), vocab)
    mixed_regime = RunManifest.model_validate(read_manifest(run_dirs[MIXED])).regime
    checks = []
    for language in mlm_only_languages(mixed_regime):
        for task in context.config.regime.tasks:
            pair = TaskLanguagePair(task=task, language=language)
            score = mixed.score(task, language)
            if score is not None:
                checks.append(BaselineCheck(pair=str(pair), score=score.value, majority=majority_score(bank.dataset(pair, "test"))))

    curves: Dict[str, Dict[str, Dict[int, float]]] = {}
    pairs: Optional[List[TaskLanguagePair]] = None
    for label in (MIXED, ENGLISH_ONLY):
        session = fewshot.FewShotSession(run_dirs[label])
        # the mixed run's unsupervised unseen pairs, for both initialisations
        pairs = pairs if pairs is not None else session.default_pairs()
        for pair in pairs:
            for k in ks:
                name = f"fewshot-{label.replace(':', '-')}-{pair.task}-{pair.language}-k{k}"
                manifest = session.run(pair, k, FewShotMode.EXISTING_TASK, name, args)
                curves.setdefault(label, {}).setdefault(str(pair), {})[k] = manifest.extra["score"]

    return SeedOutcome(seed=context.config.seed, unseen_pairs=unseen, aggregates=aggregates, mlm_only=checks, fewshot=curves)


def run(args: argparse.Namespace) -> int:
    context = load_context(args.config)
    if context.settings.HYPERX_SEED is not None:
        raise UsageError("HYPERX_SEED would pin every seed of the sweep; unset it and use --seeds")
    if len(set(args.seeds)) != len(args.seeds):
        raise UsageError(f"--seeds must be distinct, got {args.seeds}")
    ks = args.k or [0, *context.config.fewshot.k_values]
    if any(k < 0 for k in ks):
        raise UsageError(f"k must be non-negative, got {ks}")
    root = context.layout.create(context.layout.sweep(args.name))
    call = invocation(args)

    outcomes = []
    for seed in args.seeds:
        seed_root = root / f"seed-{seed}"
        seed_root.mkdir()
        config = context.config.model_copy(
            update={"seed": seed, "output": context.config.output.model_copy(update={"root": str(seed_root)})}
        )
        config_path = seed_root / SEED_CONFIG
        config_path.write_text(json.dumps({"config": config.model_dump(mode="json")}, indent=2), encoding="utf-8")
        logger.info("sweep seed", seed=seed, root=str(seed_root))
        outcomes.append(run_seed(config_path, ks, call))

    summary = summarize(outcomes)
    (root / SUMMARY).write_text(
        json.dumps({"summary": summary.model_dump(mode="json"), "outcomes": [o.model_dump(mode="json") for o in outcomes]}, indent=2),
        encoding="utf-8",
    )
    frame = outcomes_frame(outcomes)
    frame.to_csv(root / "aggregates.csv")
    print(frame.to_string(float_format=lambda v: f"{v * 100:.1f}"))
    for criterion in summary.criteria:
        verdict = {True: "pass", False: "FAIL", None: "n/a"}[criterion.passed]
        print(f"{verdict:4}  {criterion.name}: {criterion.wins}/{criterion.total} (need {criterion.required})  {criterion.detail}")
    print(root)
    if args.strict and not summary.passed:
        failed = [c.name for c in summary.criteria if c.passed is False]
        raise AcceptanceFailure(f"acceptance criteria failed: {', '.join(failed)}")
    return 0
