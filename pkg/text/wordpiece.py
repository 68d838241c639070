"""WordPiece vocabulary and greedy longest-match-first subword encoding."""
from __future__ import annotations

import logging
import os
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from text.segments import PAD

logger = logging.getLogger(__name__)

UNK, CLS, SEP = "[UNK]", "[CLS]", "[SEP]"
SPECIALS = (PAD, UNK, CLS, SEP)
CONTINUATION = "##"
MAX_CHARS_PER_WORD = 100


class WordPieceVocab:
    """Pieces indexed by line number; [PAD] must be id 0."""

    def __init__(self, pieces: Sequence[str]):
        if not pieces:
            raise ValueError("WordPiece vocabulary is empty")
        self.pieces = list(pieces)
        self.index = {p: i for i, p in enumerate(self.pieces)}
        missing = [s for s in SPECIALS if s not in self.index]
        if missing:
            raise ValueError(f"WordPiece vocabulary lacks special pieces {missing}")
        if self.index[PAD] != 0:
            raise ValueError("[PAD] must be the first vocabulary entry")

    def __len__(self) -> int:
        return len(self.pieces)

    def __contains__(self, piece: str) -> bool:
        return piece in self.index

    def id(self, piece: str) -> int:
        return self.index.get(piece, self.index[UNK])

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "WordPieceVocab":
        with open(path, "r", encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f if line.rstrip("\n")])

    def write(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.pieces) + "\n", encoding="utf-8")
        return path


def build_vocab(token_lists: Iterable[Sequence[str]], size: int = 2000) -> WordPieceVocab:
    """Specials, every character with its ## continuation, then the most frequent words.

    Any word built from seen characters is therefore fully covered.
    """
    words: Counter[str] = Counter()
    chars: set[str] = set()
    for tokens in token_lists:
        for tok in tokens:
            if tok == PAD:
                continue
            w = tok.lower()
            words[w] += 1
            chars.update(w)
    pieces = list(SPECIALS)
    for ch in sorted(chars):
        pieces.append(ch)
    for ch in sorted(chars):
        pieces.append(CONTINUATION + ch)
    seen = set(pieces)
    for word, _ in sorted(words.items(), key=lambda kv: (-kv[1], kv[0])):
        if len(pieces) >= size:
            break
        if word not in seen:
            pieces.append(word)
            seen.add(word)
    return WordPieceVocab(pieces)


def wordpiece_split(token: str, vocab: WordPieceVocab) -> list[str]:
    word = token.lower()
    if len(word) > MAX_CHARS_PER_WORD:
        return [UNK]
    pieces, start = [], 0
    while start < len(word):
        end = len(word)
        match = None
        while start < end:
            piece = word[start:end]
            if start > 0:
                piece = CONTINUATION + piece
            if piece in vocab:
                match = piece
                break
            end -= 1
        if match is None:
            return [UNK]
        pieces.append(match)
        start = end
    return pieces


def wordpiece_tokenize(
    tokens: Sequence[str],
    vocab: WordPieceVocab,
    max_len: int = 16,
) -> tuple[np.ndarray, np.ndarray]:
    """[CLS] pieces [SEP], post-truncated and post-padded to max_len; returns (ids, mask)."""
    if len(vocab) == 0:
        raise ValueError("WordPiece vocabulary is empty")
    pieces: list[str] = []
    for tok in tokens:
        if tok != PAD:
            pieces.extend(wordpiece_split(tok, vocab))
    pieces = [CLS] + pieces[:max_len - 2] + [SEP]
    ids = np.full(max_len, vocab.pad_id, dtype=np.int64)
    ids[:len(pieces)] = [vocab.id(p) for p in pieces]
    mask = np.zeros(max_len, dtype=bool)
    mask[:len(pieces)] = True
    return ids, mask
