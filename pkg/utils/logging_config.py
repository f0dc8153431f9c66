"""Logging configuration."""
import logging
import os
from datetime import datetime
from config.settings import LOG_LEVEL, LOG_FILE


def setup_logging(level=LOG_LEVEL, log_file=LOG_FILE):
    """Set up logging configuration."""
    handlers = [logging.StreamHandler()]
    if log_file:
        # Create logs directory if it doesn't exist
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        handlers.insert(0, logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, str(level).upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True
    )

    logger = logging.getLogger('ReinforcedCDA')
    logger.info(f"Logging initialized at {datetime.now().isoformat()}")
    return logger
