"""
Logging helpers
One rich handler on the root logger, module loggers everywhere else
"""

import logging
import os
from typing import Optional

from rich.logging import RichHandler

_configured = False


def configure_logging(level: Optional[str] = None) -> None:
    """
    Install the rich handler once.

    Args:
        level: Level name; defaults to QSDC_LOG_LEVEL or INFO
    """
    global _configured
    level_name = (level or os.getenv("QSDC_LOG_LEVEL", "INFO")).upper()
    root = logging.getLogger()
    if not _configured:
        handler = RichHandler(rich_tracebacks=True, show_path=False)
        handler.setFormatter(logging.Formatter("[%(name)s] %(message)s"))
        root.addHandler(handler)
        _configured = True
    root.setLevel(level_name)


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
