"""Backbone checkpoint directories.

Layout: ``manifest.json`` (config, seed, step count, corpus hash),
``vocab.txt``, and one ``{name}.hxt`` tensor file per parameter.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from app.backbone.model import Backbone
from app.backbone.vocab import Vocabulary
from app.core.errors import ConfigurationError
from app.models.config import BackboneConfig
from app.numcore.serialize import load_named, save_named

MANIFEST = "manifest.json"
VOCAB = "vocab.txt"


def save_checkpoint(
    backbone: Backbone,
    vocab: Vocabulary,
    directory: Union[str, Path],
    seed: int,
    steps: int,
    corpus_hash: str,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    directory = Path(directory)
    save_named(directory, backbone.named_parameters())
    vocab.save(directory / VOCAB)
    manifest = {
        "config": backbone.config.model_dump(),
        "seed": seed,
        "steps": steps,
        "corpus_hash": corpus_hash,
        "frozen": backbone.frozen,
        "parameters": sorted(backbone.named_parameters()),
        "masking": {"select": "mask_rate", "replace": 0.8, "random": 0.1, "keep": 0.1},
        **(extra or {}),
    }
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return directory


def load_checkpoint(directory: Union[str, Path], train_layer_norm: bool = True) -> Tuple[Backbone, Vocabulary]:
    """Restore a frozen backbone and its vocabulary."""
    directory = Path(directory)
    if not (directory / MANIFEST).exists():
        raise ConfigurationError(f"no backbone checkpoint at {directory}")
    manifest = json.loads((directory / MANIFEST).read_text(encoding="utf-8"))
    config = BackboneConfig(**manifest["config"])
    backbone = Backbone(config, np.random.default_rng(0))
    arrays = load_named(directory)
    missing = sorted(set(backbone.named_parameters()) - set(arrays))
    if missing:
        raise ConfigurationError(f"checkpoint {directory} lacks parameters: {', '.join(missing)}")
    backbone.load_arrays(arrays)
    backbone.freeze(train_layer_norm=train_layer_norm)
    return backbone, Vocabulary.load(directory / VOCAB)
