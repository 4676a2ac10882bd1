"""Logging setup shared by the CLI commands."""

import logging
from pathlib import Path

from rich.console import Console
from rich.logging import RichHandler

from .config import LoggingSettings


def setup_logging(
    settings: LoggingSettings,
    level: str | None = None,
    log_dir: Path | None = None,
    console: Console | None = None,
) -> None:
    """
    Configure the ``elsort`` logger hierarchy.

    Args:
        settings: Logging section of the application config.
        level: Level overriding ``settings.level``.
        log_dir: Directory for ``settings.file`` when it is a relative path.
        console: Rich console to log to (stderr by default).
    """
    logger = logging.getLogger("elsort")
    logger.setLevel((level or settings.level).upper())
    logger.handlers.clear()
    logger.propagate = False

    rich_handler = RichHandler(
        console=console or Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
    )
    rich_handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(rich_handler)

    if settings.file:
        log_path = Path(settings.file)
        if not log_path.is_absolute() and log_dir is not None:
            log_path = log_dir / log_path
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_path, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter(settings.format))
        logger.addHandler(file_handler)
