"""
Logging setup for the command-line front end.
"""
import sys

from loguru import logger


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    """Replace the default loguru sink with a single stderr sink."""
    level = "DEBUG" if verbose else "WARNING" if quiet else "INFO"
    logger.remove()
    logger.add(
        sys.stderr,
        level=level,
        format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {message}",
    )
