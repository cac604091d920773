"""Few-shot sweeps over (pair, k), one run directory each."""
import argparse
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd
import structlog

from app.cli.common import context_from_run, invocation, load_backbone
from app.core.config import get_settings
from app.core.errors import ConfigurationError, UnknownSourceError, UsageError
from app.core.log import configure_logging
from app.core.runs import MANIFEST, write_json
from app.models.domain import FewShotMode, RunManifest, TaskLanguagePair
from app.trainer.fewshot import fewshot_finetune
from app.trainer.systems import load_system

logger = structlog.get_logger()

Job = Tuple[str, str, int, str, str]


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("fewshot", help="few-shot fine-tuning sweep from a zero-shot run")
    parser.add_argument("run", type=Path, help="trained run directory")
    parser.add_argument("--k", nargs="+", type=int, default=None,
                        help="examples per run (shots per label with --new-labels)")
    parser.add_argument("--pairs", nargs="+", default=None, help="task/language pairs (default: unseen languages)")
    parser.add_argument("--new-labels", action="store_true", help="merge entity types into one new label set")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--name", default=None, help="prefix for the per-(pair, k) run names")
    parser.set_defaults(handler=run)


class FewShotSession:
    """A zero-shot run loaded once and reused across its sweep."""

    def __init__(self, run_dir: Path) -> None:
        self.run_dir = run_dir
        self.context, self.manifest = context_from_run(run_dir)
        if self.manifest.best_checkpoint is None:
            raise ConfigurationError(f"{run_dir} has no checkpoint to fine-tune")
        backbone, vocab = load_backbone(self.context, self.manifest)
        self.system = load_system(self.manifest.best_checkpoint, backbone, vocab)
        self.family = self.context.family()
        self.bank = self.context.bank(self.family, vocab)

    def default_pairs(self) -> List[TaskLanguagePair]:
        unseen = set(self.family.unseen)
        return [p for p in self.manifest.regime.eval_pairs if p.language in unseen]

    def run(self, pair: TaskLanguagePair, k: int, mode: FewShotMode, name: str, args: Dict) -> RunManifest:
        run_dir = self.context.layout.create_run(name)
        manifest = fewshot_finetune(
            self.system,
            pair,
            k,
            mode,
            self.bank,
            self.context.config.fewshot,
            self.manifest.regime,
            name=name,
            config=self.context.echo,
            run_dir=run_dir,
            backbone_path=self.manifest.backbone_path,
        )
        manifest = manifest.model_copy(update={"invocation": args, "extra": {**manifest.extra, "source_run": str(self.run_dir)}})
        write_json(run_dir / MANIFEST, manifest)
        return manifest


_sessions: Dict[str, FewShotSession] = {}


def _worker_init() -> None:
    settings = get_settings()
    configure_logging(settings.HYPERX_LOG_LEVEL, settings.HYPERX_LOG_JSON)


def _run_job(job: Job, args: Dict) -> Dict:
    run_dir, pair, k, mode, name = job
    session = _sessions.get(run_dir)
    if session is None:
        session = _sessions[run_dir] = FewShotSession(Path(run_dir))
    manifest = session.run(TaskLanguagePair.parse(pair), k, FewShotMode(mode), name, args)
    return manifest.extra


def plan_jobs(
    session: FewShotSession,
    ks: List[int],
    pairs: Optional[List[str]],
    mode: FewShotMode,
    prefix: str,
) -> List[Job]:
    """Expand a sweep into (pair, k) jobs, each with its own run name.

    Every pair is checked here so a bad ``--pairs`` entry fails before any
    run directory exists.

    Args:
        session: the loaded zero-shot run
        ks: examples per run (shots per label in new-label mode)
        pairs: ``task/language`` strings, or ``None`` for the unseen-language pairs
        mode: existing task or new label set
        prefix: run-name prefix

    Returns:
        Picklable job tuples.

    Raises:
        UsageError: a pair names an unknown task or language, or nothing is left to sweep
    """
    chosen = [TaskLanguagePair.parse(p) for p in pairs] if pairs else session.default_pairs()
    if not chosen:
        raise UsageError(f"{session.run_dir} has no unseen-language pairs; pass --pairs")
    known_tasks = {p.task for p in session.manifest.regime.eval_pairs}
    for pair in chosen:
        try:
            session.bank.check_pair(pair)
        except UnknownSourceError as exc:
            raise UsageError(f"--pairs: {exc}") from exc
        if mode is FewShotMode.EXISTING_TASK and pair.task not in known_tasks:
            raise UsageError(f"--pairs: {session.run_dir} has no head for task {pair.task!r}; known: {sorted(known_tasks)}")
    if mode is FewShotMode.NEW_LABEL_SET:
        base = session.context.config.fewshot.new_label_base_task
        chosen = list(dict.fromkeys(TaskLanguagePair(task=base, language=p.language) for p in chosen))
    jobs = []
    for pair in chosen:
        for k in ks:
            name = f"{prefix}-{pair.task}-{pair.language}-k{k}"
            jobs.append((str(session.run_dir), str(pair), k, mode.value, name))
    return jobs


def run(args: argparse.Namespace) -> int:
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    mode = FewShotMode.NEW_LABEL_SET if args.new_labels else FewShotMode.EXISTING_TASK
    session = FewShotSession(args.run)
    _sessions[str(args.run)] = session
    fewshot = session.context.config.fewshot
    ks = args.k or (fewshot.shot_values if args.new_labels else fewshot.k_values)
    if any(k < 0 for k in ks):
        raise UsageError(f"k must be non-negative, got {ks}")
    jobs = plan_jobs(session, ks, args.pairs, mode, args.name or f"fewshot-{session.manifest.name}")
    call = invocation(args)
    logger.info("fewshot sweep", jobs=len(jobs), workers=args.workers, mode=mode.value)

    if args.workers == 1:
        results = [_run_job(job, call) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.workers, initializer=_worker_init) as pool:
            results = list(pool.map(_run_job, jobs, [call] * len(jobs)))

    table = pd.DataFrame(results, columns=["pair", "mode", "k", "zero_shot_score", "score"])
    print(table.to_string(index=False, float_format=lambda v: f"{v * 100:.1f}"))
    return 0
