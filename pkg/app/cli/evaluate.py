import argparse
from pathlib import Path
from typing import List

import structlog

from app.cli.common import context_from_run, load_backbone
from app.core.errors import ConfigurationError
from app.core.runs import OutputLayout, write_json
from app.evalkit.grid import zero_shot_grid
from app.evalkit.reports import FORMATS, write_reports
from app.models.domain import EvalReport
from app.trainer.systems import load_system

logger = structlog.get_logger()

REPORT_PREFIX = "report_"


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("eval", help="zero-shot evaluation of trained runs")
    parser.add_argument("runs", nargs="+", type=Path, help="run directories")
    parser.add_argument("--name", default=None, help="report directory name")
    parser.add_argument("--formats", nargs="+", choices=FORMATS, default=list(FORMATS))
    parser.set_defaults(handler=run)


def evaluate_run(run_dir: Path) -> EvalReport:
    """Restore a run's best checkpoint and score its evaluation pairs."""
    context, manifest = context_from_run(run_dir)
    if manifest.best_checkpoint is None:
        raise ConfigurationError(f"{run_dir} has no checkpoint to evaluate")
    backbone, vocab = load_backbone(context, manifest)
    system = load_system(manifest.best_checkpoint, backbone, vocab)
    family = context.family()
    bank = context.bank(family, vocab)
    regime = manifest.regime
    return zero_shot_grid(
        system,
        regime.eval_pairs,
        bank,
        regime.downstream_train_pairs,
        family.seen,
        family.pivot,
        regime.regime.value,
    )


def report_filename(report: EvalReport, taken: List[str]) -> str:
    stem = f"{REPORT_PREFIX}{report.system}"
    name, index = f"{stem}.json", 1
    while name in taken:
        name, index = f"{stem}_{index}.json", index + 1
    return name


def run(args: argparse.Namespace) -> int:
    reports = [evaluate_run(run_dir) for run_dir in args.runs]
    first, _ = context_from_run(args.runs[0])
    layout = OutputLayout(first.config.output.root)
    name = args.name or "eval-" + "+".join(path.name for path in args.runs)
    out_dir = layout.create(layout.report(name))
    taken: List[str] = []
    for report in reports:
        taken.append(report_filename(report, taken))
        write_json(out_dir / taken[-1], report)
    write_reports(reports, out_dir, args.formats)
    logger.info("evaluation written", directory=str(out_dir), systems=[r.system for r in reports])
    print(out_dir)
    return 0
