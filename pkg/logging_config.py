"""
Logging Configuration Module

All modules log through children of the ``switching_rhc`` logger. Only the
command line entry point installs a handler.
"""

import logging
import os

ROOT_LOGGER_NAME = "switching_rhc"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Log level used when neither an argument nor the environment gives one
LOG_LEVEL = os.environ.get("SWITCHING_RHC_LOG_LEVEL", "INFO")


def get_logger(name):
    """
    Get a logger below the project root logger

    Args:
        name: Module name, usually ``__name__``

    Returns:
        logging.Logger: The child logger
    """
    return logging.getLogger(f"{ROOT_LOGGER_NAME}.{name}")


def configure_logging(level=None):
    """
    Install a single stream handler on the project root logger

    Args:
        level: Level name or number; falls back to SWITCHING_RHC_LOG_LEVEL

    Returns:
        logging.Logger: The configured root logger
    """
    logger = logging.getLogger(ROOT_LOGGER_NAME)
    resolved = level if level is not None else LOG_LEVEL
    if isinstance(resolved, str):
        resolved = resolved.upper()
    logger.setLevel(resolved)

    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
    logger.propagate = False
    return logger
