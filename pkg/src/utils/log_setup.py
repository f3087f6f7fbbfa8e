# -*- coding: utf-8 -*-
"""
Loguru sink setup
"""

import sys
from typing import Optional

from loguru import logger


def configure_logging(level: str = "INFO", log_file: Optional[str] = None):
    """Reset loguru sinks: stderr at ``level`` plus an optional rotating file"""
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format="{time:HH:mm:ss} | {level: <7} | {message}")
    if log_file:
        logger.add(log_file, level="DEBUG", rotation="1 day", retention="7 days")
