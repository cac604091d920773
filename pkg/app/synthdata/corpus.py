"""Annotated sentences and split-disjoint corpus sampling."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import SamplingError
from app.synthdata.language import SyntheticLanguage, category_of, entity_type_of

# Offsets added to the language seed for each sampling stream
SPLIT_OFFSETS = {"train": 101, "dev": 202, "test": 303, "mlm": 404, "pretrain": 505}
# Hash buckets (out of 10) owned by each split; mlm and pretrain text
# comes from the training buckets so dev/test stay unseen.
SPLIT_BUCKETS = {
    "train": frozenset(range(8)),
    "mlm": frozenset(range(8)),
    "pretrain": frozenset(range(8)),
    "dev": frozenset({8}),
    "test": frozenset({9}),
}
_MAX_ATTEMPTS_PER_SENTENCE = 200


@dataclass(frozen=True)
class AnnotatedSentence:
    tokens: Tuple[str, ...]
    cat_tags: Optional[Tuple[str, ...]]
    bio_tags: Optional[Tuple[str, ...]]
    language: str
    underlying: Tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.tokens)


def annotate(language: SyntheticLanguage, underlying: Sequence[str]) -> AnnotatedSentence:
    """Realise lexemes as tokens and derive both tag layers from them."""
    tokens: List[str] = []
    cats: List[str] = []
    bio: List[str] = []
    for lexeme in underlying:
        form = language.lexicon[lexeme]
        entity = entity_type_of(lexeme)
        for position, token in enumerate(form):
            tokens.append(token)
            cats.append(category_of(lexeme))
            if entity is None:
                bio.append("O")
            else:
                bio.append(f"{'B' if position == 0 else 'I'}-{entity}")
    return AnnotatedSentence(
        tokens=tuple(tokens),
        cat_tags=tuple(cats),
        bio_tags=tuple(bio),
        language=language.name,
        underlying=tuple(underlying),
    )


def split_bucket(underlying: Sequence[str]) -> int:
    digest = hashlib.blake2b(" ".join(underlying).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % 10


def sample_corpus(language: SyntheticLanguage, n_sentences: int, split: str) -> List[AnnotatedSentence]:
    """Sample ``n_sentences`` sentences that belong to ``split``.

    Sentences are assigned to splits by a hash of their lexemes, so train, dev
    and test never share a sentence whatever the seeds.

    Raises:
        SamplingError: a non-positive count, an unknown split, or a split that cannot be filled
    """
    if n_sentences <= 0:
        raise SamplingError(f"n_sentences must be positive, got {n_sentences}")
    if split not in SPLIT_OFFSETS:
        raise SamplingError(f"unknown split {split!r}; expected one of {sorted(SPLIT_OFFSETS)}")
    rng = np.random.default_rng(language.spec.seed + SPLIT_OFFSETS[split])
    buckets = SPLIT_BUCKETS[split]
    sentences: List[AnnotatedSentence] = []
    attempts = 0
    while len(sentences) < n_sentences:
        attempts += 1
        if attempts > _MAX_ATTEMPTS_PER_SENTENCE * n_sentences:
            raise SamplingError(f"could not fill {split} split for {language.name}")
        underlying = language.sample_underlying(rng)
        if split_bucket(underlying) in buckets:
            sentences.append(annotate(language, underlying))
    return sentences


def rederive(language: SyntheticLanguage, sentence: AnnotatedSentence) -> AnnotatedSentence:
    """Independent re-annotation from the stored lexemes."""
    return annotate(language, sentence.underlying)
