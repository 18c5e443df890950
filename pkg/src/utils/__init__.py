"""
Utility modules for the sparse approximation tool.

Configuration layering (defaults, environment, config file, command line)
and logging setup.
"""

from utils.config_manager import ConfigManager, RunConfig
from utils.logger import ProgressLogger, setup_logger

__all__ = ['ConfigManager', 'RunConfig', 'ProgressLogger', 'setup_logger']
