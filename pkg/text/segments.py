"""Seven-token transcript segments with a three-token overlap."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

SEGMENT_LENGTH = 7
STRIDE = 4
PAD = "[PAD]"


@dataclass(frozen=True)
class TranscriptSegment:
    tokens: tuple[str, ...]
    start: int
    transcript_id: str = ""

    @property
    def real_tokens(self) -> tuple[str, ...]:
        return tuple(t for t in self.tokens if t != PAD)

    def text(self) -> str:
        return " ".join(self.real_tokens)


def segment_tokens(tokens: Sequence[str], transcript_id: str = "") -> list[TranscriptSegment]:
    """Windows of 7 at stride 4 from index 0; the last window is PAD-filled."""
    if not tokens:
        raise ValueError(f"transcript '{transcript_id}' has no tokens to segment")
    segments = []
    start = 0
    while True:
        window = tuple(tokens[start:start + SEGMENT_LENGTH])
        window += (PAD,) * (SEGMENT_LENGTH - len(window))
        segments.append(TranscriptSegment(window, start, transcript_id))
        if start + SEGMENT_LENGTH >= len(tokens):
            return segments
        start += STRIDE
