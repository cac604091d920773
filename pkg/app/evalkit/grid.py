"""Zero-shot evaluation over a grid of (task, language) pairs."""
from __future__ import annotations

from typing import Collection, Dict, Optional, Sequence

import pandas as pd
import structlog

from app.evalkit.metrics import score_tags
from app.models.domain import EvalReport, PairScore, TaskLanguagePair
from app.trainer.data import DataBank
from app.trainer.systems import TaggingSystem

logger = structlog.get_logger()

BLOCKS = ("seen", "unseen", "all")


def evaluate_pair(system: TaggingSystem, pair: TaskLanguagePair, bank: DataBank, split: str = "test") -> PairScore:
    """Score one pair on one split.

    Args:
        system: the trained system
        pair: the (task, language) cell to score
        bank: source of the encoded split
        split: usually test; dev during training

    Returns:
        The pair's metric value, with ``vacuous`` set when no gold spans exist.

    Raises:
        UnknownSourceError: the task or language is unknown to the data bank or the system
    """
    dataset = bank.dataset(pair, split)
    metric, value, vacuous = score_tags(pair.task, system.predict(dataset), dataset.gold())
    return PairScore(task=pair.task, language=pair.language, metric=metric, value=value, vacuous=vacuous)


def zero_shot_grid(
    system: TaggingSystem,
    eval_pairs: Sequence[TaskLanguagePair],
    bank: DataBank,
    train_pairs: Collection[TaskLanguagePair],
    seen_languages: Collection[str],
    pivot: str,
    regime: str,
) -> EvalReport:
    """Per-pair test scores; pairs the system trained on are flagged not zero-shot.

    Raises:
        UnknownSourceError: an eval pair names an unknown task or language
    """
    trained = set(train_pairs)
    scores = []
    for pair in eval_pairs:
        score = evaluate_pair(system, pair, bank).model_copy(
            update={"zero_shot": pair not in trained, "seen": pair.language in seen_languages}
        )
        logger.info("zero-shot", pair=str(pair), metric=score.metric, value=round(score.value, 4),
                    zero_shot=score.zero_shot)
        scores.append(score)
    return EvalReport(system=system.name.value, regime=regime, pivot=pivot, scores=scores)


def scores_frame(report: EvalReport) -> pd.DataFrame:
    return pd.DataFrame([s.model_dump() for s in report.scores])


def aggregates(report: EvalReport) -> Dict[str, Dict[str, Optional[float]]]:
    """Per task: mean over seen, unseen and all languages, pivot excluded."""
    frame = scores_frame(report)
    result: Dict[str, Dict[str, Optional[float]]] = {}
    if frame.empty:
        return result
    frame = frame[frame["language"] != report.pivot]
    for task in dict.fromkeys(s.task for s in report.scores):
        rows = frame[frame["task"] == task]
        blocks = {"seen": rows[rows["seen"]], "unseen": rows[~rows["seen"]], "all": rows}
        result[task] = {name: (float(block["value"].mean()) if len(block) else None) for name, block in blocks.items()}
    return result
