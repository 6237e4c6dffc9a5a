"""
Logging setup for scripts and the command line.

Handlers come from oddspy's setup_logging, as everywhere else in our tools.
This module only adds the AQUITRANS_LOG_LEVEL lookup and routes the
package loggers (aquitrans.*) into the handlers oddspy installed. Library
modules only call logging.getLogger(__name__).
"""
import logging
import os
from pathlib import Path
from typing import Optional, Union

from dotenv import load_dotenv
from oddspy.utils.logging import setup_logging as oddspy_setup_logging

LOG_LEVEL_ENV = "AQUITRANS_LOG_LEVEL"
PACKAGE_LOGGER = "aquitrans"


def resolve_log_level(default: str = "INFO") -> int:
    load_dotenv()
    name = os.getenv(LOG_LEVEL_ENV, default).upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        logging.getLogger(__name__).warning(
            f"Unknown log level '{name}' in {LOG_LEVEL_ENV}, using {default}"
        )
        level = logging.getLevelName(default)
    return level


def setup_logging(
    log_dir: Optional[Union[str, Path]],
    timestamp: str,
    name: str,
    level: Optional[int] = None,
) -> logging.Logger:
    """
    Set up logging for one run and return its logger.

    With a log_dir, oddspy writes the log file there and the aquitrans
    package loggers share its handlers. Without one, nothing is attached
    and records go wherever the host application sends them.
    """
    level = resolve_log_level() if level is None else level
    package = logging.getLogger(PACKAGE_LOGGER)
    package.setLevel(level)

    # Re-running in the same process must not stack handlers
    for handler in list(package.handlers):
        if getattr(handler, "_aquitrans_shared", False):
            package.removeHandler(handler)

    if log_dir is None:
        return logging.getLogger(f"{PACKAGE_LOGGER}.{name}")

    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    logger = oddspy_setup_logging(log_dir, timestamp, name)
    logger.setLevel(level)

    # Handlers oddspy put on the root logger already see package records
    if logger is not logging.getLogger() and logger.name != PACKAGE_LOGGER:
        for handler in logger.handlers:
            handler._aquitrans_shared = True
            package.addHandler(handler)
    return logger
