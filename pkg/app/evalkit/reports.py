"""Error reduction and cross-system comparison tables."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import pandas as pd
import structlog

from app.core.errors import JoinError, UsageError
from app.evalkit.grid import BLOCKS, aggregates
from app.models.domain import EvalReport

logger = structlog.get_logger()

FORMATS = ("jsonl", "csv", "text")


def reduction(system_score: float, baseline_score: float) -> Optional[float]:
    """``(E_base - E_sys) / E_base * 100`` with ``E = 1 - score``; None when the baseline is perfect."""
    base_error = 1.0 - baseline_score
    if base_error == 0:
        return None
    return (base_error - (1.0 - system_score)) / base_error * 100.0


def _index(report: EvalReport) -> Dict[tuple, tuple]:
    return {(s.task, s.language): (s.metric, s.value) for s in report.scores}


def error_reduction(report: EvalReport, baseline: EvalReport) -> Dict[str, Optional[float]]:
    """Reduction per ``task/language`` and per ``task/{seen,unseen,all}`` aggregate.

    Raises:
        JoinError: the reports cover different pairs or disagree on a metric
    """
    ours, theirs = _index(report), _index(baseline)
    if set(ours) != set(theirs):
        missing = sorted(set(ours) ^ set(theirs))
        raise JoinError(f"{report.system} and {baseline.system} cover different pairs: {missing}")
    result: Dict[str, Optional[float]] = {}
    for key, (metric, value) in ours.items():
        base_metric, base_value = theirs[key]
        if metric != base_metric:
            raise JoinError(f"{key[0]}/{key[1]}: {metric} vs {base_metric}")
        result[f"{key[0]}/{key[1]}"] = reduction(value, base_value)
    base_aggs = aggregates(baseline)
    for task, blocks in aggregates(report).items():
        for block, value in blocks.items():
            base = base_aggs[task][block]
            result[f"{task}/{block}"] = None if value is None or base is None else reduction(value, base)
    return result


def column_names(reports: Sequence[EvalReport]) -> List[str]:
    """``{system}:{regime}`` per report, with ``.{i}`` appended when a label repeats."""
    names: List[str] = []
    for i, report in enumerate(reports):
        label = report_label(report)
        names.append(label if label not in names else f"{label}.{i}")
    return names


def report_label(report: EvalReport) -> str:
    return f"{report.system}:{report.regime}"


def join_reports(reports: Sequence[EvalReport]) -> pd.DataFrame:
    """One row per (task, language), one column per report, aggregate rows appended per task.

    Columns are keyed by system and regime, so a mixed-language Hyper-X run and
    a pivot-only one sit side by side as ``hyperx:mixed_language`` and
    ``hyperx:multi_task``.

    Args:
        reports: evaluation reports over the same grid

    Returns:
        A ``(task, language)``-indexed frame of scores in ``[0, 1]``.

    Raises:
        JoinError: nothing to join, or two reports score the same task with different metrics
    """
    if not reports:
        raise JoinError("nothing to join")
    names = column_names(reports)
    metrics: Dict[str, str] = {}
    rows: List[dict] = []
    for name, report in zip(names, reports):
        for score in report.scores:
            known = metrics.setdefault(score.task, score.metric)
            if known != score.metric:
                raise JoinError(f"{score.task} is scored with {known} and {score.metric}")
            rows.append({"task": score.task, "language": score.language, "system": name, "value": score.value})
        for task, blocks in aggregates(report).items():
            rows.extend({"task": task, "language": block, "system": name, "value": value}
                        for block, value in blocks.items())
    index = pd.MultiIndex.from_tuples(
        list(dict.fromkeys((r["task"], r["language"]) for r in rows)), names=["task", "language"]
    )
    table = pd.DataFrame(index=index, columns=names, dtype=float)
    for row in rows:
        table.loc[(row["task"], row["language"]), row["system"]] = row["value"]
    return table


def _language_order(report: EvalReport, task: str) -> List[str]:
    scores = [s for s in report.scores if s.task == task and s.language != report.pivot]
    return [report.pivot] + [s.language for s in scores if s.seen] + [s.language for s in scores if not s.seen]


def text_table(reports: Sequence[EvalReport], decimals: int = 1) -> str:
    """Plain-text comparison: pivot row, seen block, unseen block, then aggregates, per task."""
    table = join_reports(reports) * 100.0
    first = reports[0]
    blocks: List[str] = []
    for task in dict.fromkeys(s.task for s in first.scores):
        order = [lang for lang in _language_order(first, task) if (task, lang) in table.index] + list(BLOCKS)
        section = table.loc[task].reindex(order)
        metric = next(s.metric for s in first.scores if s.task == task)
        blocks.append(f"{task} ({metric})\n" + section.to_string(float_format=lambda v: f"{v:.{decimals}f}", na_rep="-"))
    return "\n\n".join(blocks) + "\n"


def reduction_table(reports: Sequence[EvalReport], baseline: EvalReport) -> pd.DataFrame:
    """Error reduction of every non-baseline report, one column per report."""
    columns = {
        name: error_reduction(r, baseline)
        for name, r in zip(column_names(reports), reports)
        if r is not baseline
    }
    return pd.DataFrame(columns)


def export_jsonl(reports: Iterable[EvalReport], path: Union[str, Path]) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for report in reports:
            for score in report.scores:
                handle.write(json.dumps({"system": report.system, "regime": report.regime, **score.model_dump()}) + "\n")
    return path


def export_csv_grids(reports: Sequence[EvalReport], directory: Union[str, Path]) -> List[Path]:
    """``grid_{task}.csv``: languages by systems, aggregate rows last."""
    directory = Path(directory)
    table = join_reports(reports)
    paths = []
    for task in table.index.get_level_values("task").unique():
        path = directory / f"grid_{task}.csv"
        table.loc[task].to_csv(path)
        paths.append(path)
    return paths


def write_reports(
    reports: Sequence[EvalReport],
    directory: Union[str, Path],
    formats: Sequence[str] = FORMATS,
    baseline: Optional[EvalReport] = None,
) -> List[Path]:
    """Write the comparison in the chosen formats.

    ``jsonl`` gives one score per line, ``csv`` one grid per task (plus
    ``error_reduction.csv`` with a baseline), ``text`` the printable table.

    Raises:
        UsageError: an unknown format
        JoinError: the reports cannot be joined
    """
    directory = Path(directory)
    unknown = sorted(set(formats) - set(FORMATS))
    if unknown:
        raise UsageError(f"unknown report formats {unknown}; expected some of {list(FORMATS)}")
    written: List[Path] = []
    if "jsonl" in formats:
        written.append(export_jsonl(reports, directory / "scores.jsonl"))
    if "csv" in formats:
        written.extend(export_csv_grids(reports, directory))
        if baseline is not None:
            path = directory / "error_reduction.csv"
            reduction_table(reports, baseline).to_csv(path)
            written.append(path)
    if "text" in formats:
        path = directory / "table.txt"
        text = text_table(reports)
        if baseline is not None:
            text += "\nerror reduction (%) vs " + report_label(baseline) + "\n"
            text += reduction_table(reports, baseline).to_string(float_format=lambda v: f"{v:.1f}", na_rep="n/a") + "\n"
        path.write_text(text, encoding="utf-8")
        written.append(path)
    logger.info("reports written", directory=str(directory), files=len(written))
    return written
