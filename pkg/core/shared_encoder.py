"""
Shared sentence-transformers encoder.

Loads each model ONCE per process; the segment and sentence embedders both go
through get_encoder() instead of instantiating their own SentenceTransformer.
The import is deferred so runs that never select embedder=sbert do not pay
for it.
"""
from __future__ import annotations

import logging
import threading
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from sentence_transformers import SentenceTransformer

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "all-MiniLM-L6-v2"

_encoders: dict[str, "SentenceTransformer"] = {}
_lock = threading.Lock()


def get_encoder(model_name: str = DEFAULT_MODEL) -> "SentenceTransformer":
    """Returns the process-wide encoder for `model_name`, loading it on first call."""
    with _lock:
        encoder = _encoders.get(model_name)
        if encoder is None:
            from sentence_transformers import SentenceTransformer

            logger.info("[Encoder] Loading shared model (%s)...", model_name)
            encoder = SentenceTransformer(model_name)
            _encoders[model_name] = encoder
        return encoder
