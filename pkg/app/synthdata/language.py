"""Synthetic languages over one shared grammar.

Every language realises the same underlying lexemes and constituents; only
the surface lexicon and the constituent order differ. Languages in one
relatedness group copy surface forms from a shared group proto-lexicon.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from app.core.errors import SpecError

logger = structlog.get_logger()

CATEGORIES: Tuple[str, ...] = ("NOUN", "VERB", "ADJ", "ADV", "DET", "ADP", "PRON", "PROPN")
ENTITY_TYPES: Tuple[str, ...] = ("PER", "LOC")
BIO_LABELS: Tuple[str, ...] = ("O", "B-PER", "I-PER", "B-LOC", "I-LOC")
CONSTITUENTS: Tuple[str, ...] = ("SUBJ", "VERB", "OBJ", "MOD")
CANONICAL_ORDER: Tuple[str, ...] = CONSTITUENTS

_CONSONANTS = "ptkbdgmnslrvzfhj"
_VOWELS = "aeiou"
_SYLLABLES = [c + v for c in _CONSONANTS for v in _VOWELS]
# (min, max) syllables per surface word
_WORD_LENGTH = {"DET": (1, 2), "ADP": (1, 2), "PRON": (1, 2)}
_DEFAULT_WORD_LENGTH = (2, 3)
_ENTITY_TOKENS = {"PER": (1, 3), "LOC": (1, 2)}


def category_of(lexeme: str) -> str:
    """Surface category of an underlying lexeme id such as ``NOUN12``."""
    kind = lexeme.rstrip("0123456789")
    return "PROPN" if kind in ENTITY_TYPES else kind


def entity_type_of(lexeme: str) -> Optional[str]:
    kind = lexeme.rstrip("0123456789")
    return kind if kind in ENTITY_TYPES else None


def lexeme_inventory(sizes: Dict[str, int]) -> List[str]:
    """Ordered lexeme ids; identical for every language sharing ``sizes``."""
    return [f"{kind}{i}" for kind in sorted(sizes) for i in range(sizes[kind])]


@dataclass(frozen=True)
class LanguageSpec:
    """Parameters that fully determine one synthetic language."""

    name: str
    seed: int
    group: int
    group_seed: int
    lexicon_sizes: Dict[str, int]
    seen_in_pretraining: bool = True
    word_order: Optional[Tuple[str, ...]] = None
    core_fraction: float = 0.4
    share_rate: float = 0.5
    entity_rate: float = 0.8
    pp_rate: float = 0.5
    adv_rate: float = 0.3


@dataclass
class SyntheticLanguage:
    """A generated language: lexicon, word order, and a sentence sampler."""

    spec: LanguageSpec
    lexicon: Dict[str, Tuple[str, ...]]
    word_order: Tuple[str, ...]
    adjective_first: bool
    adposition_first: bool
    _by_kind: Dict[str, List[str]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        for lexeme in self.lexicon:
            self._by_kind.setdefault(lexeme.rstrip("0123456789"), []).append(lexeme)

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def entity_probability(self) -> float:
        # subject and object always, a PP noun phrase with probability pp_rate
        return min(1.0, self.spec.entity_rate / (2.0 + self.spec.pp_rate))

    def surface_tokens(self) -> List[str]:
        return sorted({token for form in self.lexicon.values() for token in form})

    def _pick(self, rng: np.random.Generator, kind: str) -> str:
        options = self._by_kind[kind]
        return options[int(rng.integers(len(options)))]

    def _noun_phrase(self, rng: np.random.Generator, entity_types: Sequence[str]) -> List[str]:
        if rng.random() < self.entity_probability:
            return [self._pick(rng, entity_types[int(rng.integers(len(entity_types)))])]
        if rng.random() < 0.15:
            return [self._pick(rng, "PRON")]
        phrase = [self._pick(rng, "NOUN")]
        if rng.random() < 0.4:
            adjective = self._pick(rng, "ADJ")
            phrase = [adjective] + phrase if self.adjective_first else phrase + [adjective]
        if rng.random() < 0.7:
            phrase = [self._pick(rng, "DET")] + phrase
        return phrase

    def sample_underlying(self, rng: np.random.Generator) -> List[str]:
        """Lexemes of one sentence, already in this language's surface order."""
        constituents: Dict[str, List[str]] = {
            "SUBJ": self._noun_phrase(rng, ENTITY_TYPES),
            "VERB": [self._pick(rng, "VERB")],
            "OBJ": self._noun_phrase(rng, ENTITY_TYPES),
        }
        if rng.random() < self.spec.adv_rate:
            constituents["VERB"].append(self._pick(rng, "ADV"))
        if rng.random() < self.spec.pp_rate:
            inner = self._noun_phrase(rng, ("LOC", "PER"))
            adposition = self._pick(rng, "ADP")
            constituents["MOD"] = [adposition] + inner if self.adposition_first else inner + [adposition]
        underlying: List[str] = []
        for slot in self.word_order:
            underlying.extend(constituents.get(slot, []))
        return underlying


def _draw_form(rng: np.random.Generator, kind: str) -> Tuple[str, ...]:
    def word(lo: int, hi: int) -> str:
        return "".join(_SYLLABLES[int(i)] for i in rng.integers(len(_SYLLABLES), size=int(rng.integers(lo, hi + 1))))

    if kind in ENTITY_TYPES:
        lo, hi = _ENTITY_TOKENS[kind]
        return tuple(word(2, 3) for _ in range(int(rng.integers(lo, hi + 1))))
    return (word(*_WORD_LENGTH.get(kind, _DEFAULT_WORD_LENGTH)),)


def _unique_forms(rng: np.random.Generator, lexemes: Sequence[str], taken: set) -> Dict[str, Tuple[str, ...]]:
    forms = {}
    for lexeme in lexemes:
        form = _draw_form(rng, lexeme.rstrip("0123456789"))
        while form in taken:
            form = _draw_form(rng, lexeme.rstrip("0123456789"))
        taken.add(form)
        forms[lexeme] = form
    return forms


def proto_lexicon(group_seed: int, inventory: Sequence[str], core_fraction: float) -> Tuple[Dict[str, Tuple[str, ...]], List[str]]:
    """Group proto-forms plus the core lexemes every member inherits."""
    rng = np.random.default_rng(group_seed)
    forms = _unique_forms(rng, inventory, set())
    core_size = math.ceil(core_fraction * len(inventory))
    core = sorted(inventory[int(i)] for i in rng.permutation(len(inventory))[:core_size])
    return forms, core


def generate_language(spec: LanguageSpec) -> SyntheticLanguage:
    """Deterministically build the language described by ``spec``."""
    needed = {"NOUN", "VERB", "ADJ", "ADV", "DET", "ADP", "PRON", *ENTITY_TYPES}
    empty = sorted(kind for kind in needed if spec.lexicon_sizes.get(kind, 0) <= 0)
    if empty:
        raise SpecError(f"language {spec.name!r}: empty lexicon for {', '.join(empty)}")
    if spec.word_order is not None and sorted(spec.word_order) != sorted(CONSTITUENTS):
        raise SpecError(
            f"language {spec.name!r}: word order {list(spec.word_order)} is not a permutation of {list(CONSTITUENTS)}"
        )

    inventory = lexeme_inventory(spec.lexicon_sizes)
    proto, core = proto_lexicon(spec.group_seed, inventory, spec.core_fraction)
    core_set = set(core)

    rng = np.random.default_rng(spec.seed)
    inherited = [lex for lex in inventory if lex in core_set or rng.random() < spec.share_rate]
    inherited_set = set(inherited)
    lexicon = {lex: proto[lex] for lex in inherited}
    own = [lex for lex in inventory if lex not in inherited_set]
    lexicon.update(_unique_forms(rng, own, set(proto.values())))

    if spec.word_order is not None:
        order = tuple(spec.word_order)
    else:
        order = tuple(CONSTITUENTS[int(i)] for i in rng.permutation(len(CONSTITUENTS)))
    adjective_first = bool(rng.random() < 0.5)
    adposition_first = bool(rng.random() < 0.5)

    logger.debug("language generated", language=spec.name, inherited=len(inherited), order=order)
    return SyntheticLanguage(
        spec=spec,
        lexicon={lex: lexicon[lex] for lex in inventory},
        word_order=order,
        adjective_first=adjective_first,
        adposition_first=adposition_first,
    )


def lexicon_overlap(a: SyntheticLanguage, b: SyntheticLanguage) -> float:
    """Fraction of shared lexemes realised with identical surface forms."""
    shared = set(a.lexicon) & set(b.lexicon)
    if not shared:
        return 0.0
    return sum(a.lexicon[lex] == b.lexicon[lex] for lex in shared) / len(shared)
