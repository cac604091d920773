"""Span F1 and token accuracy, both micro-averaged."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from app.core.errors import AlignmentError, EmptyEvaluationError

Span = Tuple[int, int, str]

# Metric reported for each task; new label sets are span-scored
TASK_METRICS = {"pos": "accuracy", "ner": "f1", "ent": "f1"}


def metric_for(task: str) -> str:
    return TASK_METRICS.get(task, "f1")


def bio_to_spans(tags: Sequence[str]) -> List[Span]:
    """``(start, end, type)`` spans with exclusive ``end``.

    An ``I-X`` that does not continue an open ``X`` span opens a new one.
    """
    spans: List[Span] = []
    start: Optional[int] = None
    label: Optional[str] = None

    def close(i: int) -> None:
        nonlocal start, label
        if start is not None:
            spans.append((start, i, label))
        start, label = None, None

    for i, tag in enumerate(tags):
        if tag == "O":
            close(i)
            continue
        prefix, _, kind = tag.partition("-")
        if prefix not in ("B", "I") or not kind:
            raise ValueError(f"invalid BIO tag at position {i}: {tag!r}")
        if prefix == "B" or start is None or label != kind:
            close(i)
            start, label = i, kind
    close(len(tags))
    return spans


def _check_aligned(pred: Sequence[Sequence[str]], gold: Sequence[Sequence[str]]) -> None:
    if len(pred) != len(gold):
        raise AlignmentError(f"{len(pred)} predicted sentences vs {len(gold)} gold sentences")
    for index, (p, g) in enumerate(zip(pred, gold)):
        if len(p) != len(g):
            raise AlignmentError(f"sentence {index}: {len(p)} predicted tags vs {len(g)} gold tags")


@dataclass(frozen=True)
class SpanScore:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    # no gold and no predicted spans anywhere: scored as perfect
    vacuous: bool = False


def span_prf(pred: Sequence[Sequence[str]], gold: Sequence[Sequence[str]]) -> SpanScore:
    """Exact-match (type and boundaries) micro precision, recall and F1.

    Raises:
        AlignmentError: sentence counts or lengths differ
    """
    _check_aligned(pred, gold)
    tp = fp = fn = 0
    for p, g in zip(pred, gold):
        p_set, g_set = set(bio_to_spans(p)), set(bio_to_spans(g))
        tp += len(p_set & g_set)
        fp += len(p_set - g_set)
        fn += len(g_set - p_set)
    if tp + fp + fn == 0:
        return SpanScore(1.0, 1.0, 1.0, 0, 0, 0, vacuous=True)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return SpanScore(precision, recall, f1, tp, fp, fn)


def span_f1(pred: Sequence[Sequence[str]], gold: Sequence[Sequence[str]]) -> float:
    return span_prf(pred, gold).f1


def tag_accuracy(pred: Sequence[Sequence[str]], gold: Sequence[Sequence[str]]) -> float:
    """Fraction of tokens tagged exactly right, over all tokens.

    Raises:
        AlignmentError: sentence counts or lengths differ
        EmptyEvaluationError: there are no tokens to score
    """
    _check_aligned(pred, gold)
    total = sum(len(g) for g in gold)
    if total == 0:
        raise EmptyEvaluationError("accuracy over an empty evaluation set is undefined")
    correct = sum(p_tag == g_tag for p, g in zip(pred, gold) for p_tag, g_tag in zip(p, g))
    return correct / total


def score_tags(task: str, pred: Sequence[Sequence[str]], gold: Sequence[Sequence[str]]) -> Tuple[str, float, bool]:
    """``(metric name, value, vacuous)`` for ``task``."""
    metric = metric_for(task)
    if metric == "accuracy":
        return metric, tag_accuracy(pred, gold), False
    if not gold:
        raise EmptyEvaluationError(f"no sentences to score for {task}")
    score = span_prf(pred, gold)
    return metric, score.f1, score.vacuous
