"""
Logging configuration for the treesliced command-line tools.
"""

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

_HANDLER_TAG = "_treesliced_handler"


def setup_logger(log_level: int = logging.INFO, log_dir: Optional[Path] = None) -> None:
    """
    Setup application-wide logging configuration.

    Args:
        log_level: The logging level to use. Defaults to INFO.
        log_dir: Directory for the rotating log file. Console only when None.
    """
    logger = logging.getLogger()
    logger.setLevel(log_level)

    # Drop handlers from an earlier call so repeated CLI invocations in one
    # process (tests, scripts) do not print every line twice
    for handler in list(logger.handlers):
        if getattr(handler, _HANDLER_TAG, False):
            logger.removeHandler(handler)
            handler.close()

    file_formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    console_formatter = logging.Formatter(
        '%(levelname)s: %(message)s'
    )

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(console_formatter)
    console_handler.setLevel(log_level)
    setattr(console_handler, _HANDLER_TAG, True)
    logger.addHandler(console_handler)

    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            filename=log_dir / "treesliced.log",
            maxBytes=10 * 1024 * 1024,  # 10MB
            backupCount=5,
            encoding='utf-8'
        )
        file_handler.setFormatter(file_formatter)
        file_handler.setLevel(log_level)
        setattr(file_handler, _HANDLER_TAG, True)
        logger.addHandler(file_handler)

    logger.debug("Logging configured")
