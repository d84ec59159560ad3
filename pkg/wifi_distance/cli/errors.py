from __future__ import annotations

import logging
import sys
from typing import Any, Optional, Sequence, Tuple

import click

from wifi_distance.errors import ConfigError, DataError, InvariantError

logger = logging.getLogger(__name__)

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def classify(exc: BaseException) -> Tuple[str, int]:
    """Map an exception to (kind, exit code)."""
    if isinstance(exc, (ConfigError, click.ClickException)):
        return "usage", EXIT_USAGE
    if isinstance(exc, DataError):
        return "data", EXIT_DATA
    if isinstance(exc, InvariantError):
        return "invariant", EXIT_INTERNAL
    return "internal", EXIT_INTERNAL


def error_line(exc: BaseException) -> str:
    kind, _ = classify(exc)
    text = exc.format_message() if isinstance(exc, click.ClickException) else str(exc)
    detail = " ".join(text.split()) or exc.__class__.__name__
    return f"error={kind} type={exc.__class__.__name__} detail={detail}"


def report_error(exc: BaseException) -> int:
    """Write the one-line error to stderr and return the exit code."""
    kind, code = classify(exc)
    if kind == "internal":
        logger.exception("Unhandled error: %s", exc)
    click.echo(error_line(exc), err=True)
    return code


class GuardedGroup(click.Group):
    """click group that turns every failure, click's own usage errors included, into one-line errors and exit codes."""

    def main(
        self,
        args: Optional[Sequence[str]] = None,
        prog_name: Optional[str] = None,
        complete_var: Optional[str] = None,
        standalone_mode: bool = True,
        **extra: Any,
    ) -> Any:
        if not standalone_mode:
            return super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
        except click.exceptions.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(1)
        except click.ClickException as exc:
            sys.exit(report_error(exc))
        # non-standalone click returns the Exit code, or the command's return value
        sys.exit(rv if isinstance(rv, int) else 0)

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except (click.exceptions.Exit, click.exceptions.Abort, click.ClickException):
            raise
        except Exception as exc:
            ctx.exit(report_error(exc))
