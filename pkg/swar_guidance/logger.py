"""
Logging configuration for swar_guidance.

Rotating file handler plus console output. get_logger() is a factory so
library modules never touch global handler state; they only call
logging.getLogger(__name__).
"""

from logging import Logger, getLogger, Formatter, INFO
from logging.handlers import RotatingFileHandler
import logging
import os
from typing import Optional

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

LEVELS = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
}


def get_logger(
    name: str = "swar_guidance",
    level: int = INFO,
    logfile: Optional[str] = None,
    max_bytes: int = 10 * 1024 * 1024,
    backup_count: int = 5,
) -> Logger:
    """
    Return a configured logger instance using RotatingFileHandler.
    Handlers are only attached the first time a given name is configured.
    """
    logger = getLogger(name)
    logger.setLevel(level)

    if not logger.handlers:
        fmt = Formatter(LOG_FORMAT)
        console = logging.StreamHandler()
        console.setFormatter(fmt)
        logger.addHandler(console)

        if logfile:
            directory = os.path.dirname(logfile)
            if directory:
                os.makedirs(directory, exist_ok=True)
            file_handler = RotatingFileHandler(
                logfile, maxBytes=max_bytes, backupCount=backup_count
            )
            file_handler.setFormatter(fmt)
            logger.addHandler(file_handler)

    return logger


def level_from_name(name: str) -> int:
    """Map a config level name to a logging constant, INFO when unknown."""
    return LEVELS.get(name.upper(), INFO)
