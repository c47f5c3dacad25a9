import logging
import sys

from src.core.config import settings
from src.core.exceptions import ConfigError

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_LEVEL = getattr(logging, settings.LOG_LEVEL.upper())


def get_logger(name: str) -> logging.Logger:
    """
    Get a configured logger with the specified name

    Records go to stderr; stdout is reserved for command output.

    Args:
        name: Logger name (usually __name__)

    Returns:
        logging.Logger: Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(LOG_LEVEL)

    # Avoid adding handlers if they already exist
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)

    return logger


def set_level(level: str) -> None:
    """Change the level of every logger created through get_logger"""
    numeric = logging.getLevelName(level.upper())
    if not isinstance(numeric, int):
        raise ConfigError(f"unknown log level {level!r}")
    for name in list(logging.root.manager.loggerDict):
        if name.startswith("src."):
            logging.getLogger(name).setLevel(numeric)
