import argparse
from pathlib import Path
from typing import List, Optional

import structlog

from app.cli.evaluate import REPORT_PREFIX
from app.core.errors import ConfigurationError, UsageError
from app.core.runs import OutputLayout
from app.evalkit.reports import FORMATS, report_label, text_table, write_reports
from app.models.domain import EvalReport

logger = structlog.get_logger()


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("report", help="join evaluation reports into comparison tables")
    parser.add_argument("reports", nargs="+", type=Path, help="report JSON files or eval output directories")
    parser.add_argument("--baseline", default=None, help="system name or report file to compute error reduction against")
    parser.add_argument("--formats", nargs="+", choices=FORMATS, default=list(FORMATS))
    parser.add_argument("--name", default="comparison")
    parser.add_argument("--root", type=Path, default=Path("outputs"), help="output root")
    parser.set_defaults(handler=run)


def read_report(path: Path) -> EvalReport:
    if not path.is_file():
        raise ConfigurationError(f"no report at {path}")
    return EvalReport.model_validate_json(path.read_text(encoding="utf-8"))


def collect_reports(paths: List[Path]) -> List[EvalReport]:
    files: List[Path] = []
    for path in paths:
        if path.is_dir():
            found = sorted(path.glob(f"{REPORT_PREFIX}*.json"))
            if not found:
                raise ConfigurationError(f"no reports in {path}")
            files.extend(found)
        else:
            files.append(path)
    return [read_report(path) for path in files]


def resolve_baseline(reports: List[EvalReport], baseline: Optional[str]) -> Optional[EvalReport]:
    if baseline is None:
        return None
    if Path(baseline).is_file():
        return read_report(Path(baseline))
    for report in reports:
        if baseline in (report.system, report_label(report)):
            return report
    raise UsageError(f"--baseline {baseline!r} is neither a report file nor one of {[report_label(r) for r in reports]}")


def run(args: argparse.Namespace) -> int:
    reports = collect_reports(args.reports)
    baseline = resolve_baseline(reports, args.baseline)
    layout = OutputLayout(args.root)
    out_dir = layout.create(layout.report(args.name))
    write_reports(reports, out_dir, args.formats, baseline)
    print(text_table(reports))
    print(out_dir)
    return 0
