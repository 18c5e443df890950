"""
Logging configuration module.
"""

import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional

DETAILED_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(filename)s:%(lineno)d - %(message)s'
SIMPLE_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def setup_logger(name: str = "spmp3d", log_dir: Optional[Path] = None,
                 log_level: str = "INFO", console_output: bool = True) -> logging.Logger:
    """Setup and configure logger.

    Console output goes to stderr so that stdout stays free for the JSON
    printed by the evaluate and memory commands.

    Args:
        name: Logger name (None configures the root logger)
        log_dir: Directory for a dated log file
        log_level: Logging level
        console_output: Whether to output to console

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.handlers = []
    level = getattr(logging, str(log_level).upper(), logging.INFO)
    logger.setLevel(level)

    detailed_formatter = logging.Formatter(DETAILED_FORMAT, datefmt='%Y-%m-%d %H:%M:%S')
    simple_formatter = logging.Formatter(SIMPLE_FORMAT, datefmt='%H:%M:%S')

    if log_dir:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        log_file = log_dir / f"spmp3d_{datetime.now().strftime('%Y%m%d')}.log"

        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(detailed_formatter)
        logger.addHandler(file_handler)

    if console_output:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(level)
        console_handler.setFormatter(simple_formatter)
        logger.addHandler(console_handler)

    return logger


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)


class ProgressLogger:
    """Log ``description: i/n (p%), ETA`` lines for long sweeps."""

    def __init__(self, logger: logging.Logger, total_items: int,
                 description: str = "Processing"):
        self.logger = logger
        self.total_items = total_items
        self.description = description
        self.current_item = 0
        self.start_time = datetime.now()

    def update(self, item_name: str = None):
        """Count one finished item and log progress."""
        self.current_item += 1
        percentage = (self.current_item / self.total_items) * 100 if self.total_items else 100.0

        elapsed = (datetime.now() - self.start_time).total_seconds()
        rate = elapsed / self.current_item
        eta = rate * max(0, self.total_items - self.current_item)

        msg = f"{self.description}: {self.current_item}/{self.total_items} ({percentage:.1f}%), ETA: {int(eta)}s"
        if item_name:
            msg += f" - {item_name}"
        self.logger.info(msg)

    def complete(self):
        elapsed = (datetime.now() - self.start_time).total_seconds()
        self.logger.info(
            f"{self.description} completed: {self.current_item} items in {elapsed:.1f}s"
        )
