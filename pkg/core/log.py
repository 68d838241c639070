"""Logging setup shared by the CLI and the tests."""
from __future__ import annotations

import logging
import os
from pathlib import Path

FORMAT = "%(levelname)-7s %(name)s: %(message)s"


def setup_logging(level: int | str = logging.INFO, log_file: str | os.PathLike | None = None) -> None:
    """Configure the root logger once: a stream handler plus an optional file handler."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    root.setLevel(level)

    stream = logging.StreamHandler()
    stream.setFormatter(logging.Formatter(FORMAT))
    root.addHandler(stream)

    if log_file is not None:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(log_file, mode="w", encoding="utf-8")
        fh.setFormatter(logging.Formatter(FORMAT))
        root.addHandler(fh)

    # third-party chatter
    for noisy in ("sentence_transformers", "langgraph", "urllib3", "numba"):
        logging.getLogger(noisy).setLevel(logging.WARNING)
