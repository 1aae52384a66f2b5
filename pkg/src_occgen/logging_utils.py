"""Logging utilities: package logger, optional rotating file, per-run error counting."""
import logging
import os
import threading
from logging.handlers import TimedRotatingFileHandler
from typing import Optional

from .config import config

LOGGER_NAME = "occgen"
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'

# Global logger instance
logger = None
logger_lock = threading.Lock()

error_counter = None


class ErrorCountingHandler(logging.Handler):
    """Counts ERROR-and-above records; the CLI exit status is derived from it."""

    def __init__(self):
        super().__init__(level=logging.ERROR)
        self._lock_count = threading.Lock()
        self.count = 0

    def emit(self, record):
        with self._lock_count:
            self.count += 1

    def reset(self):
        with self._lock_count:
            self.count = 0


def setup_logger(log_file: Optional[str] = None, level: Optional[str] = None) -> logging.Logger:
    """
    Set up the package logger with a console handler and, when a log file is
    configured, a midnight-rotating file handler.

    Args:
        log_file: Path to log file. If None, uses config default (may be unset).
        level: Level name. If None, uses config default.

    Returns:
        Configured logger instance.
    """
    global logger, error_counter

    if logger is not None:
        return logger

    with logger_lock:
        if logger is not None:  # Double-check after acquiring lock
            return logger

        log_file = log_file or config.get("LOG_FILE")
        new_logger = logging.getLogger(LOGGER_NAME)

        level_name = str(level or config.get("LOG_LEVEL", "INFO")).upper()
        new_logger.setLevel(getattr(logging, level_name, logging.INFO))
        new_logger.propagate = False

        formatter = logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT)

        if log_file:
            log_dir = os.path.dirname(log_file)
            if log_dir and not os.path.exists(log_dir):
                os.makedirs(log_dir, exist_ok=True)
            handler = TimedRotatingFileHandler(
                log_file,
                when='midnight',
                interval=1,
                backupCount=int(config.get("LOG_RETENTION_DAYS", 7)),
                encoding='utf-8'
            )
            handler.setFormatter(formatter)
            new_logger.addHandler(handler)

        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        new_logger.addHandler(console_handler)

        error_counter = ErrorCountingHandler()
        new_logger.addHandler(error_counter)

        logger = new_logger
        logger.debug("Logger initialized")
        return logger


def get_logger() -> logging.Logger:
    """Get the global logger instance, initializing if necessary."""
    if logger is None:
        return setup_logger()
    return logger


def reset_logger():
    """Close and drop all handlers so the next get_logger() starts fresh."""
    global logger, error_counter
    with logger_lock:
        if logger is not None:
            for h in logger.handlers[:]:
                try:
                    h.flush()
                    h.close()
                except Exception:
                    pass
                logger.removeHandler(h)
        logger = None
        error_counter = None


def set_verbosity(verbosity: int):
    """Map -v counts onto levels: 0 keeps the configured level, 1 INFO, 2+ DEBUG."""
    log = get_logger()
    if verbosity >= 2:
        log.setLevel(logging.DEBUG)
    elif verbosity == 1:
        log.setLevel(logging.INFO)


def get_error_count() -> int:
    """Number of ERROR records logged since the last reset."""
    get_logger()
    return error_counter.count if error_counter is not None else 0


def reset_error_count():
    get_logger()
    if error_counter is not None:
        error_counter.reset()


def record_stage(stage: str, item=None, status: str = "ok", detail: Optional[str] = None):
    """
    Record one pipeline step (a frame fused, a grid downsampled, ...).

    Args:
        stage: Pipeline stage name (e.g. "fuse")
        item: Frame id or file the step worked on
        status: "ok", "skipped"/"truncated" (warning) or anything else (error)
        detail: Optional free-text detail appended to the line
    """
    log = get_logger()

    message = f"{stage}"
    if item is not None:
        message += f" - Item: {item}"
    message += f" - Status: {status}"
    if detail:
        message += f" - {detail}"

    s = status.lower()
    if s in ("ok", "success"):
        log.info(message)
    elif s in ("skipped", "truncated", "warning"):
        log.warning(message)
    else:
        log.error(message)
