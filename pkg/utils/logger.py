import datetime
import logging
import os
import sys
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def setup_logging(level: str = "INFO", log_file: Optional[str] = None) -> logging.Logger:
    """Configure root logging once: a UTF-8 log file plus stdout."""
    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file:
        os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
        handlers.insert(0, logging.FileHandler(log_file, encoding='utf-8'))

    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )
    return logging.getLogger("wavelab")


def log_debug_message(message: str) -> None:
    """Appends a timestamped line to WAVELAB_DEBUG_LOG when it is set."""
    debug_file = os.getenv("WAVELAB_DEBUG_LOG", "")
    if not debug_file:
        return
    timestamp = datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S")
    with open(debug_file, "a", encoding="utf-8") as log_file:
        log_file.write(f"[{timestamp}] {message}\n")
