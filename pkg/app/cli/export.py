"""Export adapter weights and source embeddings from a trained run."""
import argparse
import json
from pathlib import Path
from typing import Dict, List, Optional

import structlog

from app.cli.common import context_from_run, invocation, load_backbone
from app.core.errors import ConfigurationError, UnknownSourceError, UsageError
from app.hypernet.registry import SourceKind
from app.models.domain import TaskLanguagePair
from app.numcore.serialize import save_named
from app.numcore.tensor import no_grad
from app.trainer.data import DataBank
from app.trainer.systems import HyperXSystem, TaggingSystem, load_system

logger = structlog.get_logger()

EXPORT_MANIFEST = "export.json"


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("export", help="write adapters (and Hyper-X embeddings) of a trained run")
    parser.add_argument("run", type=Path, help="trained run directory")
    parser.add_argument("--pairs", nargs="+", default=None, help="task/language pairs (default: the run's eval grid)")
    parser.add_argument("--embeddings", action="store_true", help="also write the task and language embedding tables as CSV")
    parser.add_argument("--name", default=None, help="export directory name")
    parser.set_defaults(handler=run)


def export_adapters(
    system: TaggingSystem,
    pairs: List[TaskLanguagePair],
    out_dir: Path,
    bank: Optional[DataBank] = None,
) -> Dict[str, str]:
    """Write each pair's adapters as ``adapters/{task}-{language}/*.hxt``.

    Hyper-X adapters are generated on the fly; MAD-X stacks are copied.

    Args:
        system: a system that owns an adapter provider
        pairs: pairs to export
        out_dir: export directory
        bank: when given, pairs are checked against its language family first

    Returns:
        Pair string to the directory its tensors were written to.

    Raises:
        UsageError: the system has no adapters (full fine-tuning)
        UnknownSourceError: a pair's task or language is unknown to the system
    """
    if system.provider is None:
        raise UsageError(f"{system.name.value} keeps no adapters to export")
    written = {}
    for pair in pairs:
        if bank is not None:
            bank.check_pair(pair)
        with no_grad():
            stack = system.adapters_for(pair)
            arrays = {name: tensor.data for name, tensor in stack.named().items()}
        target = out_dir / "adapters" / f"{pair.task}-{pair.language}"
        save_named(target, arrays)
        written[str(pair)] = str(target)
    return written


def export_embeddings(system: HyperXSystem, out_dir: Path) -> Dict[str, str]:
    """Task and language embedding tables, one CSV each."""
    registry = system.hypernet.registry
    return {
        kind.value: str(registry.export_csv(kind, out_dir / f"{kind.value}_embeddings.csv"))
        for kind in (SourceKind.TASK, SourceKind.LANGUAGE)
    }


def run(args: argparse.Namespace) -> int:
    context, manifest = context_from_run(args.run)
    if manifest.best_checkpoint is None:
        raise ConfigurationError(f"{args.run} has no checkpoint to export")
    backbone, vocab = load_backbone(context, manifest)
    system = load_system(manifest.best_checkpoint, backbone, vocab)
    if system.provider is None:
        raise UsageError(f"{args.run} is a {system.name.value} run and has no adapters to export")
    if args.embeddings and not isinstance(system, HyperXSystem):
        raise UsageError(f"--embeddings needs a hyperx run, {args.run} is {system.name.value}")
    bank = context.bank(context.family(), vocab)

    if args.pairs:
        pairs = [TaskLanguagePair.parse(p) for p in args.pairs]
    else:
        pairs = [p for p in manifest.regime.eval_pairs if system.supports(p)]
    for pair in pairs:
        try:
            bank.check_pair(pair)
            with no_grad():
                system.adapters_for(pair)
        except UnknownSourceError as exc:
            raise UsageError(f"--pairs: {exc}") from exc

    out_dir = context.layout.create(context.layout.export(args.name or f"export-{manifest.name}"))
    adapters = export_adapters(system, pairs, out_dir)
    embeddings = export_embeddings(system, out_dir) if args.embeddings else {}
    record = {
        "source_run": str(args.run),
        "system": system.name.value,
        "adapters": adapters,
        "embeddings": embeddings,
        "invocation": invocation(args),
    }
    (out_dir / EXPORT_MANIFEST).write_text(json.dumps(record, indent=2), encoding="utf-8")
    logger.info("export written", directory=str(out_dir), pairs=len(adapters), embeddings=bool(embeddings))
    print(out_dir)
    return 0
