"""
Logging configuration and utilities.
"""
import logging
import sys
from typing import Optional

from pythonjsonlogger import jsonlogger

from config.settings import settings


def setup_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> logging.Logger:
    """Configure application logging.

    Args:
        level: Log level name; falls back to ``settings.log_level``
        fmt: "json" or "text"; falls back to ``settings.log_format``

    Returns:
        The configured root logger
    """
    level = (level or settings.log_level).upper()
    fmt = fmt or settings.log_format

    logger = logging.getLogger()
    logger.setLevel(getattr(logging, level))

    # Remove existing handlers
    logger.handlers = []

    handler = logging.StreamHandler(sys.stdout)

    if fmt == "json":
        formatter = jsonlogger.JsonFormatter(
            '%(asctime)s %(levelname)s %(name)s %(message)s',
            rename_fields={"levelname": "level", "asctime": "timestamp"}
        )
    else:
        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )

    handler.setFormatter(formatter)
    logger.addHandler(handler)

    return logger
