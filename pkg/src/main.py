"""Main application entry point."""
from __future__ import annotations

import sys
from typing import Optional, Sequence

import structlog
from pydantic import ValidationError

from src.config import get_settings
from src.domain.exceptions import ConfigError, DomainException
from src.infrastructure.logging import configure_logging
from src.presentation.cli import dispatch, parse_args

logger = structlog.get_logger(__name__)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one subcommand and map failures to exit codes."""
    args = parse_args(argv)
    try:
        settings = get_settings()
    except ValidationError as error:
        print(f"Invalid settings: {error}", file=sys.stderr)
        return ConfigError.exit_code
    configure_logging(settings)
    logger.info("Starting crowdtt", command=args.command, environment=settings.environment)

    try:
        return dispatch(args, settings)
    except DomainException as error:
        logger.error("Command failed", command=args.command, error=str(error), code=error.code)
        return error.exit_code
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return 1
    except Exception as error:
        logger.error("Unexpected failure", command=args.command, error=str(error), exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
