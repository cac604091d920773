"""Output directory layout.

    {root}/backbone/                  pretrained checkpoint
    {root}/runs/{name}/manifest.json
    {root}/runs/{name}/metrics.jsonl
    {root}/runs/{name}/checkpoints/best/
    {root}/reports/{name}/            eval and report outputs

Run and report directories are write-once.
"""
from __future__ import annotations

import json
import subprocess
from pathlib import Path
from typing import Iterable, Union

import structlog
from pydantic import BaseModel

from app.core.errors import ConfigurationError, UsageError

logger = structlog.get_logger()

MANIFEST = "manifest.json"
METRICS = "metrics.jsonl"
BEST = "checkpoints/best"


def git_describe() -> str:
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return result.stdout.strip() or "unknown"


class OutputLayout:
    def __init__(self, root: Union[str, Path]) -> None:
        self.root = Path(root)

    @property
    def backbone(self) -> Path:
        return self.root / "backbone"

    @property
    def corpus(self) -> Path:
        return self.root / "corpus"

    def run(self, name: str) -> Path:
        return self.root / "runs" / name

    def report(self, name: str) -> Path:
        return self.root / "reports" / name

    def export(self, name: str) -> Path:
        return self.root / "exports" / name

    def sweep(self, name: str) -> Path:
        return self.root / "sweeps" / name

    def create(self, path: Path) -> Path:
        """Create a fresh directory; refuses to reuse an existing one."""
        if path.exists():
            raise UsageError(f"{path} already exists; pick another --name")
        path.mkdir(parents=True)
        logger.debug("directory created", path=str(path))
        return path

    def create_run(self, name: str) -> Path:
        run = self.create(self.run(name))
        (run / BEST).mkdir(parents=True)
        return run


def write_json(path: Path, model: BaseModel) -> Path:
    path.write_text(model.model_dump_json(indent=2), encoding="utf-8")
    return path


def append_jsonl(path: Path, records: Iterable[BaseModel]) -> None:
    with path.open("a", encoding="utf-8") as handle:
        for record in records:
            handle.write(record.model_dump_json() + "\n")


def read_manifest(run_dir: Union[str, Path]) -> dict:
    path = Path(run_dir) / MANIFEST
    if not path.exists():
        raise ConfigurationError(f"no manifest at {path}")
    return json.loads(path.read_text(encoding="utf-8"))
