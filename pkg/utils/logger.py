"""Structured logging for pipeline runs and tests."""
import json
import logging
import sys
import threading
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, TypeVar, Union

from tqdm import tqdm

T = TypeVar("T")

CONSOLE_FORMAT = "%(asctime)s [%(levelname)8s] %(message)s (%(filename)s:%(lineno)s)"
_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

# shared by every thread so worker-pool records carry the run context
_context_stack: List[Dict[str, Any]] = []
_context_lock = threading.Lock()


def current_context() -> Dict[str, Any]:
    """Fields of every open LogContext, innermost last."""
    with _context_lock:
        merged: Dict[str, Any] = {}
        for fields in _context_stack:
            merged.update(fields)
        return merged


class ContextFilter(logging.Filter):
    """Copies the open LogContext fields onto each record as ``record.context``."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.context = current_context()
        return True


class StructuredLogFormatter(logging.Formatter):
    """One JSON object per record: fixed fields first, then run context."""

    def format(self, record: logging.LogRecord) -> str:
        entry: Dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created).isoformat(),
            "level": record.levelname,
            "message": record.getMessage(),
            "logger": record.name,
            "module": record.module,
            "line": record.lineno,
        }
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        for key, value in getattr(record, "context", {}).items():
            entry.setdefault(key, value)
        return json.dumps(entry, default=str)


class TqdmConsoleHandler(logging.StreamHandler):
    """Console handler that writes around live progress bars."""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            tqdm.write(self.format(record), file=self.stream)
            self.flush()
        except Exception:
            self.handleError(record)


def _console_handler() -> logging.Handler:
    # stdout carries command output (scores, tables)
    handler = TqdmConsoleHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    return handler


def _json_handler(log_file: Union[str, Path]) -> logging.Handler:
    path = Path(log_file)
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setFormatter(StructuredLogFormatter())
    handler.addFilter(ContextFilter())
    return handler


def setup_logger(log_level: str = "INFO", log_file: Optional[Union[str, Path]] = None) -> None:
    """
    Route logs to stderr, and to a JSON-lines file when one is given.

    Calling it again replaces the previous handlers, so each CLI command
    or test session gets its own log file.

    Args:
        log_level: DEBUG, INFO, WARNING, ERROR or CRITICAL (case-insensitive)
        log_file: JSON-lines log path; parent directories are created
    """
    level = (log_level or "INFO").upper()
    if level not in _LEVELS:
        logging.getLogger(__name__).warning("Unknown log level %r, using INFO", log_level)
        level = "INFO"

    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    root.setLevel(level)

    root.addHandler(_console_handler())
    if log_file:
        root.addHandler(_json_handler(log_file))
    logging.getLogger(__name__).debug("Logging initialized at level %s", level)


def progress(iterable: Iterable[T], desc: str, total: Optional[int] = None) -> Iterable[T]:
    """Wrap an iterable in a tqdm bar, silent unless INFO or more verbose is enabled."""
    disable = not logging.getLogger().isEnabledFor(logging.INFO)
    return tqdm(iterable, desc=desc, total=total, disable=disable, leave=False, file=sys.stderr)


class LogContext:
    """Attach key-value fields to every record logged inside the ``with`` block.

    Contexts nest; on a key clash the inner value wins.

        with LogContext(command="train", seed=7):
            logger.info("epoch done")
    """

    def __init__(self, **fields: Any):
        self.fields = dict(fields)

    def __enter__(self) -> "LogContext":
        with _context_lock:
            _context_stack.append(self.fields)
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        with _context_lock:
            # remove by identity; exits need not be strictly nested across threads
            for index in range(len(_context_stack) - 1, -1, -1):
                if _context_stack[index] is self.fields:
                    del _context_stack[index]
                    break
