"""Which (task, language) pairs each regime supervises and evaluates."""
from __future__ import annotations

from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import structlog

from app.core.errors import PartitionError, UsageError
from app.models.domain import MLM_TASK, Partition, Regime, TaskLanguagePair

logger = structlog.get_logger()

Pairs = List[TaskLanguagePair]


def build_partitions(
    tasks: Sequence[str],
    languages: Sequence[str],
    groups: Mapping[str, int],
    seed: int,
    pivot: str,
) -> Tuple[Pairs, Pairs]:
    """Split the downstream pair grid into two complementary training sets.

    Every non-pivot pair is supervised in exactly one partition. Assignment is
    by parity of task index plus relatedness group, so within a partition no
    member of a language's group is supervised on that language's held-out
    task. The pivot's pairs go to both.

    Raises:
        PartitionError: fewer than two tasks, or no language besides the pivot
    """
    tasks = [t for t in tasks if t != MLM_TASK]
    if len(tasks) < 2:
        raise PartitionError(f"mixed-language partitions need at least two downstream tasks, got {tasks}")
    others = [lang for lang in languages if lang != pivot]
    if not others:
        raise PartitionError("mixed-language partitions need at least one language besides the pivot")
    missing = [lang for lang in others if lang not in groups]
    if missing:
        raise PartitionError(f"no relatedness group for: {', '.join(missing)}")

    offset = int(np.random.default_rng(seed).integers(2))
    pivot_pairs = [TaskLanguagePair(task=t, language=pivot) for t in tasks]
    part_a: Pairs = list(pivot_pairs)
    part_b: Pairs = list(pivot_pairs)
    for language in others:
        for index, task in enumerate(tasks):
            target = part_a if (index + groups[language] + offset) % 2 == 0 else part_b
            target.append(TaskLanguagePair(task=task, language=language))
    logger.debug("partitions built", a=len(part_a), b=len(part_b), offset=offset)
    return part_a, part_b


def mlm_pairs(languages: Sequence[str]) -> Pairs:
    return [TaskLanguagePair(task=MLM_TASK, language=lang) for lang in languages]


def regime_pairs(
    regime: Regime,
    tasks: Sequence[str],
    languages: Sequence[str],
    groups: Mapping[str, int],
    pivot: str,
    seed: int,
    partition: Optional[Partition] = None,
    eval_only: Sequence[str] = (),
) -> Tuple[Pairs, Pairs]:
    """``(train pairs, eval pairs)`` for a regime.

    Train pairs always include MLM for every language. Eval pairs are every
    downstream pair not supervised in this run, plus the pivot's pairs.
    Languages in ``eval_only`` are never supervised on a task.

    Args:
        regime: multi_task, mixed_language or single_task
        tasks: downstream tasks; ``mlm`` is dropped if present
        languages: every language in the family, pivot included
        groups: language to group id, for partitioning
        pivot: the high-resource language
        seed: partition seed
        partition: A or B, mixed_language only
        eval_only: languages kept out of task supervision

    Returns:
        Train and eval pair lists in a deterministic order.

    Raises:
        UsageError: a partition is given outside the mixed-language regime
        PartitionError: see ``build_partitions``
    """
    tasks = [t for t in tasks if t != MLM_TASK]
    if regime is not Regime.MIXED_LANGUAGE and partition is not None:
        raise UsageError(f"--partition only applies to the mixed_language regime, not {regime.value}")
    if regime is Regime.MIXED_LANGUAGE and partition is None:
        raise UsageError("the mixed_language regime needs --partition A or B")
    if regime is Regime.SINGLE_TASK and len(tasks) != 1:
        raise UsageError(f"single_task trains exactly one task, got {tasks}")

    if regime is Regime.MIXED_LANGUAGE:
        supervised = [lang for lang in languages if lang not in eval_only]
        part_a, part_b = build_partitions(tasks, supervised, groups, seed, pivot)
        downstream = part_a if partition is Partition.A else part_b
    else:
        downstream = [TaskLanguagePair(task=t, language=pivot) for t in tasks]

    train = downstream + mlm_pairs(languages)
    grid = [TaskLanguagePair(task=t, language=lang) for t in tasks for lang in languages]
    evaluation = [p for p in grid if p.language == pivot or p not in downstream]
    return train, evaluation
