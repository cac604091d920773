"""Config resolution and pipeline assembly shared by every subcommand."""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import structlog

from app.backbone.checkpoint import load_checkpoint
from app.backbone.model import Backbone
from app.backbone.vocab import Vocabulary
from app.core.config import Settings, get_settings, load_experiment_config, parse_experiment_config, resolve_seed
from app.core.runs import OutputLayout, read_manifest
from app.models.config import ExperimentConfig
from app.models.domain import RunManifest
from app.synthdata.family import LanguageFamily
from app.trainer.data import DataBank

logger = structlog.get_logger()


@dataclass
class Context:
    """Resolved config plus where its outputs go."""

    config: ExperimentConfig
    settings: Settings
    layout: OutputLayout

    @property
    def echo(self) -> Dict[str, Any]:
        return self.config.model_dump(mode="json")

    def family(self) -> LanguageFamily:
        return LanguageFamily.from_config(self.config.data, self.config.seed)

    def bank(self, family: LanguageFamily, vocab: Vocabulary) -> DataBank:
        return DataBank(family, vocab, self.config.data, self.config.backbone.max_seq_len)


def add_config_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", type=Path, help="experiment TOML, or a run manifest.json to reproduce")


def load_context(path: Union[str, Path], settings: Optional[Settings] = None) -> Context:
    settings = settings or get_settings()
    config = resolve_seed(load_experiment_config(path), settings)
    logger.info("config loaded", path=str(path), seed=config.seed, root=config.output.root)
    return Context(config=config, settings=settings, layout=OutputLayout(config.output.root))


def context_from_run(run_dir: Union[str, Path], settings: Optional[Settings] = None) -> Tuple[Context, RunManifest]:
    """The context a run was trained under, taken from its manifest echo."""
    manifest = RunManifest.model_validate(read_manifest(run_dir))
    config = parse_experiment_config(manifest.config)
    context = Context(config=config, settings=settings or get_settings(), layout=OutputLayout(config.output.root))
    return context, manifest


def load_backbone(context: Context, manifest: Optional[RunManifest] = None) -> Tuple[Backbone, Vocabulary]:
    path = manifest.backbone_path if manifest is not None and manifest.backbone_path else context.layout.backbone
    return load_checkpoint(path)


def invocation(args: argparse.Namespace) -> Dict[str, Any]:
    """Command line and parsed arguments, for the manifest."""
    parsed = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "handler"}
    return {"argv": list(sys.argv), "args": parsed}
