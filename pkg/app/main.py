import sys
from typing import Optional, Sequence

import structlog

from app.cli.cli import build_parser
from app.core.config import get_settings
from app.core.errors import HyperXError, RuntimeFailure
from app.core.log import configure_logging

logger = structlog.get_logger()


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv`` and run the chosen command.

    Args:
        argv: command-line arguments without the program name; ``sys.argv`` when ``None``

    Returns:
        0 on success, 2 on usage or configuration errors, 3 on any runtime failure,
        including errors raised outside the package such as ``OSError``.
    """
    settings = get_settings()
    configure_logging(settings.HYPERX_LOG_LEVEL, settings.HYPERX_LOG_JSON)
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except HyperXError as exc:
        logger.error("command failed", command=args.command, error=type(exc).__name__, detail=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        logger.exception("command crashed", command=args.command, error=type(exc).__name__)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RuntimeFailure.exit_code


if __name__ == "__main__":
    sys.exit(main())
