"""Utility modules for drfer."""

from .logger import get_logger, log_step, setup_logger

__all__ = [
    "setup_logger",
    "get_logger",
    "log_step",
]
