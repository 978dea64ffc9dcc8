"""
Logging Configuration
Sets up logging for the TTM command-line tools.
"""
import logging
import os
from datetime import datetime

from . import config


def setup_logging(log_level=logging.INFO, log_file=None):
    """
    Set up logging for one CLI invocation.

    Args:
        log_level: Console and root level (default: INFO)
        log_file: Optional log file path. If None, creates TTM_LOG_DIR/ttm_TIMESTAMP.log

    Returns:
        Path of the log file in use
    """
    if log_file is None:
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        log_file = os.path.join(config.TTM_LOG_DIR, f"ttm_{timestamp}.log")
    parent = os.path.dirname(log_file)
    if parent:
        os.makedirs(parent, exist_ok=True)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    # Repeated calls (tests, notebooks) must not stack handlers or leak files
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()

    # File keeps everything, with logger names for tracing a training run
    file_handler = logging.FileHandler(log_file, encoding='utf-8')
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    ))
    root_logger.addHandler(file_handler)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(log_level)
    console_handler.setFormatter(logging.Formatter('%(levelname)s - %(message)s'))
    root_logger.addHandler(console_handler)

    # Plotting libraries log font and image lookups at DEBUG
    for name in config.QUIET_LOGGERS:
        logging.getLogger(name).setLevel(max(log_level, logging.WARNING))

    logging.info(f"Logging configured: Level={logging.getLevelName(log_level)}, File={log_file}")
    return log_file
