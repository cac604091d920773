"""Directional checks over a multi-seed sweep.

Each seed contributes one ``SeedOutcome``; ``summarize`` counts in how many
seeds each expected ordering holds.
"""
from __future__ import annotations

import math
from collections import Counter
from typing import Dict, List, Optional, Sequence

import pandas as pd
import structlog
from pydantic import BaseModel, Field, computed_field

from app.core.errors import JoinError
from app.evalkit.metrics import score_tags
from app.models.domain import EvalReport, TaskLanguagePair
from app.trainer.data import PairDataset

logger = structlog.get_logger()

MIXED = "hyperx:mixed_language"
ENGLISH_ONLY = "hyperx:multi_task"
FULL_FINETUNE = "full_finetune:single_task"
MADX = "madx:single_task"
# absolute score units; 0.01 is one point
TREND_TOLERANCE = 0.01


class BaselineCheck(BaseModel):
    pair: str
    score: float
    majority: float

    @computed_field
    @property
    def beats(self) -> bool:
        return self.score > self.majority


class SeedOutcome(BaseModel):
    """What one seed of the sweep measured."""

    seed: int
    unseen_pairs: List[str]
    # report label -> mean score over ``unseen_pairs``
    aggregates: Dict[str, float]
    mlm_only: List[BaselineCheck] = Field(default_factory=list)
    # initialising run -> pair -> k -> score
    fewshot: Dict[str, Dict[str, Dict[int, float]]] = Field(default_factory=dict)


class CriterionResult(BaseModel):
    name: str
    wins: int
    total: int
    required: int
    # None when the sweep had nothing to measure
    passed: Optional[bool]
    detail: str = ""


class AcceptanceSummary(BaseModel):
    seeds: List[int]
    criteria: List[CriterionResult]

    @computed_field
    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.criteria)

    def criterion(self, name: str) -> CriterionResult:
        for result in self.criteria:
            if result.name == name:
                return result
        raise KeyError(name)


def combine_reports(reports: Sequence[EvalReport], regime: str) -> EvalReport:
    """One report out of several single-task runs of the same system.

    Raises:
        JoinError: no reports, mixed systems, or two reports score the same pair
    """
    if not reports:
        raise JoinError("nothing to combine")
    systems = {r.system for r in reports}
    if len(systems) != 1:
        raise JoinError(f"cannot combine reports of different systems: {sorted(systems)}")
    scores = [s for r in reports for s in r.scores]
    seen = Counter((s.task, s.language) for s in scores)
    clashes = sorted(f"{t}/{lang}" for (t, lang), n in seen.items() if n > 1)
    if clashes:
        raise JoinError(f"pairs scored twice: {clashes}")
    return EvalReport(system=reports[0].system, regime=regime, pivot=reports[0].pivot, scores=scores)


def pair_mean(report: EvalReport, pairs: Sequence[str]) -> float:
    """Mean score over ``task/language`` strings.

    Raises:
        JoinError: the report lacks one of the pairs
    """
    values = []
    for text in pairs:
        pair = TaskLanguagePair.parse(text)
        score = report.score(pair.task, pair.language)
        if score is None:
            raise JoinError(f"{report.system}:{report.regime} has no score for {text}")
        values.append(score.value)
    if not values:
        raise JoinError("no pairs to average")
    return sum(values) / len(values)


def majority_score(dataset: PairDataset) -> float:
    """Score of tagging every token with the most frequent gold tag."""
    gold = dataset.gold()
    task = dataset.label_task or dataset.pair.task
    majority = Counter(tag for tags in gold for tag in tags).most_common(1)[0][0]
    _, value, _ = score_tags(task, [tuple(majority for _ in tags) for tags in gold], gold)
    return value


def non_decreasing(curve: Dict[int, float], tolerance: float = TREND_TOLERANCE) -> bool:
    values = [curve[k] for k in sorted(curve)]
    return all(b >= a - tolerance for a, b in zip(values, values[1:]))


def _required(total: int) -> int:
    # four of five seeds
    return math.ceil(0.8 * total)


def _ordering(outcomes: Sequence[SeedOutcome], name: str, ours: str, theirs: str, strict: bool) -> CriterionResult:
    usable = [o for o in outcomes if ours in o.aggregates and theirs in o.aggregates]
    if not usable:
        return CriterionResult(name=name, wins=0, total=0, required=0, passed=None, detail=f"no {ours} and {theirs}")
    wins = sum(
        (o.aggregates[ours] > o.aggregates[theirs]) if strict else (o.aggregates[ours] >= o.aggregates[theirs])
        for o in usable
    )
    required = _required(len(usable))
    op = ">" if strict else ">="
    return CriterionResult(
        name=name, wins=wins, total=len(usable), required=required, passed=wins >= required,
        detail=f"{ours} {op} {theirs} on the unseen-pair aggregate",
    )


def _mlm_only(outcomes: Sequence[SeedOutcome]) -> CriterionResult:
    usable = [o for o in outcomes if o.mlm_only]
    name = "mlm_only_above_majority"
    if not usable:
        return CriterionResult(name=name, wins=0, total=0, required=0, passed=None,
                               detail="no MLM-only languages in the mixed-language run")
    wins = sum(all(check.beats for check in o.mlm_only) for o in usable)
    required = _required(len(usable))
    return CriterionResult(name=name, wins=wins, total=len(usable), required=required, passed=wins >= required,
                           detail="every task of every MLM-only language beats the majority-class tagger")


def _mean_curves(outcomes: Sequence[SeedOutcome], init: str) -> Dict[str, Dict[int, float]]:
    frame = pd.DataFrame(
        [
            {"pair": pair, "k": k, "score": score}
            for o in outcomes
            for pair, curve in o.fewshot.get(init, {}).items()
            for k, score in curve.items()
        ],
        columns=["pair", "k", "score"],
    )
    means = frame.groupby(["pair", "k"])["score"].mean()
    curves: Dict[str, Dict[int, float]] = {}
    for (pair, k), value in means.items():
        curves.setdefault(pair, {})[int(k)] = float(value)
    return curves


def _fewshot_trend(outcomes: Sequence[SeedOutcome]) -> CriterionResult:
    curves = _mean_curves(outcomes, MIXED)
    name = "fewshot_non_decreasing"
    if not curves:
        return CriterionResult(name=name, wins=0, total=0, required=0, passed=None, detail="no few-shot runs")
    good = [pair for pair, curve in curves.items() if non_decreasing(curve)]
    return CriterionResult(
        name=name, wins=len(good), total=len(curves), required=len(curves), passed=len(good) == len(curves),
        detail=f"seed-mean score over k never drops by more than {TREND_TOLERANCE * 100:.0f} point",
    )


def _fewshot_dominance(outcomes: Sequence[SeedOutcome]) -> CriterionResult:
    name = "mixed_dominates_at_smallest_k"
    wins = total = 0
    smallest = None
    for o in outcomes:
        mixed, english = o.fewshot.get(MIXED, {}), o.fewshot.get(ENGLISH_ONLY, {})
        pairs = sorted(set(mixed) & set(english))
        ks = sorted({k for p in pairs for k in mixed[p] if k > 0 and k in english[p]})
        if not ks:
            continue
        smallest = ks[0]
        total += 1
        ours = sum(mixed[p][smallest] for p in pairs if smallest in mixed[p] and smallest in english[p])
        theirs = sum(english[p][smallest] for p in pairs if smallest in mixed[p] and smallest in english[p])
        wins += ours > theirs
    if not total:
        return CriterionResult(name=name, wins=0, total=0, required=0, passed=None, detail="no positive k")
    required = _required(total)
    return CriterionResult(name=name, wins=wins, total=total, required=required, passed=wins >= required,
                           detail=f"mixed-language init beats English-only init at k={smallest}")


def summarize(outcomes: Sequence[SeedOutcome]) -> AcceptanceSummary:
    """Evaluate every directional criterion over the sweep's seeds."""
    criteria = [
        _ordering(outcomes, "mixed_beats_full_finetune", MIXED, FULL_FINETUNE, strict=True),
        _ordering(outcomes, "mixed_at_least_english_only", MIXED, ENGLISH_ONLY, strict=False),
        _ordering(outcomes, "mixed_beats_madx", MIXED, MADX, strict=True),
        _mlm_only(outcomes),
        _fewshot_trend(outcomes),
        _fewshot_dominance(outcomes),
    ]
    summary = AcceptanceSummary(seeds=[o.seed for o in outcomes], criteria=criteria)
    logger.info("acceptance summarized", seeds=len(outcomes), passed=summary.passed)
    return summary


def outcomes_frame(outcomes: Sequence[SeedOutcome]) -> pd.DataFrame:
    """Seeds by report label: the unseen-pair aggregates side by side."""
    return pd.DataFrame({o.seed: o.aggregates for o in outcomes}).T.rename_axis("seed")
