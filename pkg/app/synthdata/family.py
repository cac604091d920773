"""The configured grid of synthetic languages."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from itertools import combinations
from typing import Dict, List, Tuple

import structlog

from app.core.errors import SpecError, UnknownSourceError
from app.models.config import DataConfig, component_seed
from app.synthdata.corpus import AnnotatedSentence, sample_corpus
from app.synthdata.language import (
    CANONICAL_ORDER,
    LanguageSpec,
    SyntheticLanguage,
    generate_language,
    lexicon_overlap,
)

logger = structlog.get_logger()


@dataclass
class LanguageFamily:
    languages: Dict[str, SyntheticLanguage]
    pivot: str
    eval_only: List[str]

    @classmethod
    def from_config(cls, data: DataConfig, seed: int) -> "LanguageFamily":
        base = component_seed(seed, "languages")
        languages = {}
        for index, entry in enumerate(data.languages):
            spec = LanguageSpec(
                name=entry.name,
                seed=base + 17 * (index + 1),
                group=entry.group,
                group_seed=base + 100_003 * (entry.group + 1),
                lexicon_sizes=dict(data.lexicon_sizes),
                seen_in_pretraining=entry.seen_in_pretraining,
                word_order=tuple(entry.word_order) if entry.word_order else None,
                core_fraction=data.group_core_fraction,
                share_rate=data.language_share_rate,
                entity_rate=data.entity_rate,
                pp_rate=data.pp_rate,
                adv_rate=data.adv_rate,
            )
            if entry.name == data.pivot and spec.word_order is None:
                spec = replace(spec, word_order=CANONICAL_ORDER)
            languages[entry.name] = generate_language(spec)
        family = cls(languages=languages, pivot=data.pivot, eval_only=list(data.eval_only_languages))
        family.check_relatedness(data.relatedness_threshold)
        return family

    def check_relatedness(self, threshold: float) -> Dict[Tuple[str, str], float]:
        """Measure pairwise lexicon overlap against ``threshold``.

        Args:
            threshold: minimum overlap inside a group, and the exclusive ceiling across groups

        Returns:
            Overlap for every unordered language pair.

        Raises:
            SpecError: a same-group pair falls below the threshold or a cross-group pair reaches it
        """
        overlaps = {}
        for a, b in combinations(self.names, 2):
            first, second = self.languages[a], self.languages[b]
            overlap = lexicon_overlap(first, second)
            overlaps[(a, b)] = overlap
            related = first.spec.group == second.spec.group
            if related and overlap < threshold:
                raise SpecError(
                    f"{a} and {b} share group {first.spec.group} but only {overlap:.2f} of their lexicon "
                    f"(need >= {threshold}); raise group_core_fraction or language_share_rate"
                )
            if not related and overlap >= threshold:
                raise SpecError(f"{a} and {b} are in different groups yet share {overlap:.2f} of their lexicon")
        logger.debug("relatedness checked", pairs=len(overlaps), threshold=threshold)
        return overlaps

    @property
    def names(self) -> List[str]:
        return list(self.languages)

    @property
    def seen(self) -> List[str]:
        return [n for n, lang in self.languages.items() if lang.spec.seen_in_pretraining]

    @property
    def unseen(self) -> List[str]:
        return [n for n, lang in self.languages.items() if not lang.spec.seen_in_pretraining]

    def groups(self) -> Dict[str, int]:
        return {n: lang.spec.group for n, lang in self.languages.items()}

    def surface_tokens(self) -> List[str]:
        return sorted({tok for lang in self.languages.values() for tok in lang.surface_tokens()})

    def corpus(self, language: str, n_sentences: int, split: str) -> List[AnnotatedSentence]:
        if language not in self.languages:
            raise UnknownSourceError(f"unknown language {language!r}; expected one of {self.names}")
        return sample_corpus(self.languages[language], n_sentences, split)

    def spec_hash(self) -> str:
        payload = {
            name: {
                "seed": lang.spec.seed,
                "group": lang.spec.group,
                "order": list(lang.word_order),
                "seen": lang.spec.seen_in_pretraining,
            }
            for name, lang in self.languages.items()
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()[:16]
