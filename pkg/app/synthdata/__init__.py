"""Synthetic multilingual tagging data and CoNLL ingestion."""
from app.synthdata.conll import ColumnMap, read_conll, repair_bio, write_conll
from app.synthdata.corpus import AnnotatedSentence, annotate, rederive, sample_corpus
from app.synthdata.family import LanguageFamily
from app.synthdata.language import (
    BIO_LABELS,
    CATEGORIES,
    ENTITY_TYPES,
    LanguageSpec,
    SyntheticLanguage,
    generate_language,
    lexicon_overlap,
)

__all__ = [
    "AnnotatedSentence",
    "BIO_LABELS",
    "CATEGORIES",
    "ColumnMap",
    "ENTITY_TYPES",
    "LanguageFamily",
    "LanguageSpec",
    "SyntheticLanguage",
    "annotate",
    "generate_language",
    "lexicon_overlap",
    "read_conll",
    "rederive",
    "repair_bio",
    "sample_corpus",
    "write_conll",
]
