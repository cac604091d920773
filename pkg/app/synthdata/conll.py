"""CoNLL-style corpus files.

Rows are tab-separated (token, cat_tag, bio_tag by default), sentences are
separated by blank lines, and lines starting with ``#`` are comments.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import structlog

from app.core.errors import LabelError, ParseError
from app.synthdata.corpus import AnnotatedSentence
from app.synthdata.family import LanguageFamily
from app.synthdata.language import BIO_LABELS, CATEGORIES, ENTITY_TYPES

logger = structlog.get_logger()

MISSING = "_"


@dataclass(frozen=True)
class ColumnMap:
    """Zero-based column positions; ``None`` means the file lacks that layer."""

    token: int = 0
    cat: Optional[int] = 1
    bio: Optional[int] = 2


def repair_bio(tags: Sequence[str]) -> Tuple[Tuple[str, ...], int]:
    """Turn every illegal ``I-X`` into ``B-X``; returns tags and repair count."""
    repaired: List[str] = []
    repairs = 0
    previous = "O"
    for tag in tags:
        if tag.startswith("I-"):
            kind = tag[2:]
            if previous == "O" or previous[2:] != kind:
                tag = f"B-{kind}"
                repairs += 1
        repaired.append(tag)
        previous = tag
    return tuple(repaired), repairs


def _check_labels(tags: Sequence[str], allowed: Iterable[str], layer: str, path: Path, lineno: int) -> None:
    allowed = set(allowed)
    unknown = sorted({tag for tag in tags if tag not in allowed})
    if unknown:
        raise LabelError(f"{path}: sentence ending at line {lineno} has unknown {layer} tag(s): {', '.join(unknown)}")


def _unannotated(rows: Sequence[Sequence[str]], column: int) -> bool:
    # a layer that is "_" on every row of a sentence is absent, not a tag
    return all(row[column] == MISSING for row in rows)


def corpus_file_name(language: str, split: str) -> str:
    return f"{language}.{split}.conll"


def read_conll(
    path: Union[str, Path],
    columns: ColumnMap = ColumnMap(),
    language: str = "unknown",
    cat_labels: Sequence[str] = CATEGORIES,
    entity_types: Sequence[str] = ENTITY_TYPES,
) -> List[AnnotatedSentence]:
    """Parse a CoNLL-style file into annotated sentences.

    A layer written as ``_`` on every row of a sentence is read back as
    missing. Lines may end in ``\\n`` or ``\\r\\n``.

    Args:
        path: file to read
        columns: where the token and tag layers sit in each row
        language: language name stamped on every sentence
        cat_labels: allowed category tags
        entity_types: entity types from which the BIO label set is built

    Returns:
        The sentences in file order, with illegal ``I-X`` tags repaired.

    Raises:
        ParseError: ragged rows or a mapped column the file does not have
        LabelError: a tag outside the task's label set
    """
    path = Path(path)
    bio_labels = ["O"] + [f"{p}-{t}" for t in entity_types for p in ("B", "I")]
    needed = max(c for c in (columns.token, columns.cat, columns.bio) if c is not None)
    width: Optional[int] = None
    rows: List[List[str]] = []
    sentences: List[AnnotatedSentence] = []

    def flush(lineno: int) -> None:
        if not rows:
            return
        tokens = tuple(row[columns.token] for row in rows)
        cats = bios = None
        if columns.cat is not None and not _unannotated(rows, columns.cat):
            cats = tuple(row[columns.cat] for row in rows)
            _check_labels(cats, cat_labels, "category", path, lineno)
        if columns.bio is not None and not _unannotated(rows, columns.bio):
            raw = [row[columns.bio] for row in rows]
            _check_labels(raw, bio_labels, "BIO", path, lineno)
            bios, repairs = repair_bio(raw)
            if repairs:
                logger.warning("bio repaired", path=str(path), line=lineno, repairs=repairs)
        sentences.append(AnnotatedSentence(tokens=tokens, cat_tags=cats, bio_tags=bios, language=language))
        rows.clear()

    with path.open("r", encoding="utf-8") as handle:
        lineno = 0
        for lineno, line in enumerate(handle, 1):
            line = line.rstrip("\r\n")
            if line.startswith("#"):
                continue
            if not line.strip():
                flush(lineno)
                continue
            parts = line.split("\t")
            if width is None:
                width = len(parts)
                if needed >= width:
                    raise ParseError(f"{path}:{lineno}: column {needed} requested but rows have {width} columns")
            elif len(parts) != width:
                raise ParseError(f"{path}:{lineno}: expected {width} columns, found {len(parts)}")
            rows.append(parts)
        flush(lineno + 1)
    return sentences


def write_conll(
    sentences: Sequence[AnnotatedSentence],
    path: Union[str, Path],
    spec_hash: Optional[str] = None,
    seed: Optional[int] = None,
) -> Path:
    """Write token/cat/bio rows plus a ``.manifest.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines: List[str] = []
    for sentence in sentences:
        lines.append(f"# language = {sentence.language}")
        cats = sentence.cat_tags or (MISSING,) * len(sentence)
        bios = sentence.bio_tags or (MISSING,) * len(sentence)
        lines.extend(f"{tok}\t{cat}\t{bio}" for tok, cat, bio in zip(sentence.tokens, cats, bios))
        lines.append("")
    text = "\n".join(lines)
    path.write_text(text, encoding="utf-8")
    sidecar = path.with_suffix(path.suffix + ".manifest.json")
    sidecar.write_text(
        json.dumps(
            {
                "sentences": len(sentences),
                "spec_hash": spec_hash,
                "seed": seed,
                "content_hash": hashlib.sha256(text.encode("utf-8")).hexdigest(),
            },
            indent=2,
            sort_keys=True,
        ),
        encoding="utf-8",
    )
    return path


def write_corpora(
    family: LanguageFamily,
    sizes: Dict[str, int],
    out_dir: Union[str, Path],
    seed: Optional[int] = None,
) -> List[Path]:
    """Dump every language's splits as ``{language}.{split}.conll`` files.

    Args:
        family: the language family to sample from
        sizes: sentences per split, e.g. ``{"train": 2000, "test": 200}``
        out_dir: target directory; pointing ``data.conll_dir`` at it reads the files back
        seed: experiment seed recorded in each sidecar manifest

    Returns:
        The written corpus paths.
    """
    out_dir = Path(out_dir)
    written = []
    spec_hash = family.spec_hash()
    for language in family.names:
        for split, size in sizes.items():
            path = out_dir / corpus_file_name(language, split)
            written.append(write_conll(family.corpus(language, size, split), path, spec_hash=spec_hash, seed=seed))
    logger.info("corpora written", path=str(out_dir), files=len(written))
    return written


__all__ = ["BIO_LABELS", "ColumnMap", "corpus_file_name", "read_conll", "repair_bio", "write_conll", "write_corpora"]
