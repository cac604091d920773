"""Encoded per-pair datasets."""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from app.backbone.vocab import Vocabulary
from app.core.errors import LabelError, UnknownSourceError
from app.models.config import DataConfig
from app.models.domain import TaskLanguagePair
from app.synthdata.conll import corpus_file_name, read_conll
from app.synthdata.corpus import AnnotatedSentence
from app.synthdata.family import LanguageFamily
from app.synthdata.language import BIO_LABELS, CATEGORIES

logger = structlog.get_logger()

IGNORE = -1
# Entity types collapsed into one: a label set the model never trained on
NEW_LABEL_TASK = "ent"
NEW_LABELS: Tuple[str, ...] = ("O", "B-ENT", "I-ENT")

TASK_LABELS: Dict[str, Tuple[str, ...]] = {"pos": CATEGORIES, "ner": BIO_LABELS, NEW_LABEL_TASK: NEW_LABELS}
_TAG_LAYER = {"pos": "cat_tags", "ner": "bio_tags", NEW_LABEL_TASK: "bio_tags"}


def labels_for(task: str) -> Tuple[str, ...]:
    try:
        return TASK_LABELS[task]
    except KeyError:
        raise LabelError(f"no label set for task {task!r}") from None


def gold_tags(sentence: AnnotatedSentence, task: str) -> Tuple[str, ...]:
    tags = getattr(sentence, _TAG_LAYER.get(task, ""), None)
    if tags is None:
        raise LabelError(f"sentence in {sentence.language} has no {task} annotation")
    return tags


def merge_entity_types(sentence: AnnotatedSentence) -> AnnotatedSentence:
    if sentence.bio_tags is None:
        return sentence
    merged = tuple(tag if tag == "O" else f"{tag[0]}-ENT" for tag in sentence.bio_tags)
    return replace(sentence, bio_tags=merged)


@dataclass
class PairDataset:
    """Token ids and label ids for one (task, language) pair; MLM pairs carry no labels."""

    pair: TaskLanguagePair
    ids: List[np.ndarray]
    labels: List[np.ndarray]
    sentences: List[AnnotatedSentence]
    label_task: Optional[str] = None

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def has_labels(self) -> bool:
        return bool(self.labels)

    def subset(self, indices: Sequence[int]) -> "PairDataset":
        return PairDataset(
            pair=self.pair,
            ids=[self.ids[i] for i in indices],
            labels=[self.labels[i] for i in indices] if self.labels else [],
            sentences=[self.sentences[i] for i in indices],
            label_task=self.label_task,
        )

    def gold(self) -> List[Tuple[str, ...]]:
        """Gold tags, cut to the encoded length."""
        task = self.label_task or self.pair.task
        return [gold_tags(s, task)[: len(ids)] for s, ids in zip(self.sentences, self.ids)]


def encode_dataset(
    pair: TaskLanguagePair,
    sentences: Sequence[AnnotatedSentence],
    vocab: Vocabulary,
    max_len: int,
    label_task: Optional[str] = None,
) -> PairDataset:
    """Encode sentences, truncating to ``max_len`` tokens.

    ``label_task`` selects the label set when it differs from the pair's task.

    Raises:
        LabelError: a tag is outside the task's label set
    """
    ids = [vocab.encode(s.tokens)[:max_len] for s in sentences]
    truncated = sum(len(s) > max_len for s in sentences)
    if truncated:
        logger.warning("sentences truncated", pair=str(pair), count=truncated, max_len=max_len)
    if pair.is_mlm:
        return PairDataset(pair=pair, ids=ids, labels=[], sentences=list(sentences))

    task = label_task or pair.task
    index = {tag: i for i, tag in enumerate(labels_for(task))}
    labels = []
    for sentence in sentences:
        tags = gold_tags(sentence, task)[:max_len]
        unknown = sorted({t for t in tags if t not in index})
        if unknown:
            raise LabelError(f"{task} tags outside the label set in {sentence.language}: {unknown}")
        labels.append(np.array([index[t] for t in tags], dtype=np.int64))
    return PairDataset(pair=pair, ids=ids, labels=labels, sentences=list(sentences), label_task=label_task)


class DataBank:
    """Lazily sampled and encoded datasets for every pair and split.

    Sentences come from the synthetic family unless ``data.conll_dir`` holds a
    ``{language}.{split}.conll`` file for the pair, in which case that file is
    read instead.
    """

    def __init__(self, family: LanguageFamily, vocab: Vocabulary, data: DataConfig, max_len: int) -> None:
        self.family = family
        self.vocab = vocab
        self.data = data
        self.max_len = max_len
        self._cache: Dict[Tuple[TaskLanguagePair, str], PairDataset] = {}

    def _size(self, split: str) -> int:
        return {
            "train": self.data.train_sentences,
            "dev": self.data.dev_sentences,
            "test": self.data.test_sentences,
            "mlm": self.data.mlm_sentences,
        }[split]

    def check_pair(self, pair: TaskLanguagePair) -> None:
        """Raise ``UnknownSourceError`` unless the pair's task and language exist.

        Raises:
            UnknownSourceError: the language is not in the family or the task has no label set
        """
        if pair.language not in self.family.languages:
            raise UnknownSourceError(
                f"unknown language {pair.language!r} in {pair}; expected one of {self.family.names}"
            )
        if not pair.is_mlm and pair.task not in TASK_LABELS:
            raise UnknownSourceError(f"unknown task {pair.task!r} in {pair}; expected one of {sorted(TASK_LABELS)}")

    def _sentences(self, language: str, split: str) -> List[AnnotatedSentence]:
        size = self._size(split)
        if self.data.conll_dir is not None:
            path = Path(self.data.conll_dir) / corpus_file_name(language, split)
            if path.exists():
                sentences = read_conll(path, language=language)
                logger.debug("conll corpus", path=str(path), sentences=len(sentences))
                return sentences[:size]
        return self.family.corpus(language, size, split)

    def dataset(self, pair: TaskLanguagePair, split: str) -> PairDataset:
        """Encoded sentences for ``pair``.

        Args:
            pair: the (task, language) pair; MLM pairs read the unlabelled mlm stream for train
            split: train, dev or test

        Returns:
            The cached ``PairDataset``.

        Raises:
            UnknownSourceError: the task or language is unknown
            LabelError: a corpus tag is outside the task's label set
        """
        self.check_pair(pair)
        if pair.is_mlm and split == "train":
            split = "mlm"
        key = (pair, split)
        if key not in self._cache:
            self._cache[key] = encode_dataset(pair, self._sentences(pair.language, split), self.vocab, self.max_len)
        return self._cache[key]

    def datasets(self, pairs: Sequence[TaskLanguagePair], split: str) -> Dict[TaskLanguagePair, PairDataset]:
        return {pair: self.dataset(pair, split) for pair in pairs}
