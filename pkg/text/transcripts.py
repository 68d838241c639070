"""Transcript records and CHAT (.cha) utterance extraction."""
from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path

from text.tokenize import tokenize_treebank

_BULLET = re.compile(r"\x15[^\x15]*\x15")
_BRACKET_CODE = re.compile(r"\[[^\]]*\]")
_EVENT = re.compile(r"&=\S+")
_FILLER = re.compile(r"&[-+]?(?=\w)")
_UNINTELLIGIBLE = re.compile(r"\b(?:xxx|yyy|www)\b")
_PAUSE = re.compile(r"\(\.+\)")
_OMITTED = re.compile(r"\((\w+)\)")
_TERMINATOR = re.compile(r"\+[/.!?\"^<,]+")
_WORD_MARKER = re.compile(r"@\w+")
_RETRACE = re.compile(r"[<>]")
_SPACES = re.compile(r"\s+")


@dataclass(frozen=True)
class Transcript:
    subject_id: str
    source: str
    raw_text: str
    tokens: tuple[str, ...]


def make_transcript(subject_id: str, source: str, text: str) -> Transcript:
    return Transcript(subject_id, source, text, tuple(tokenize_treebank(text)))


def clean_chat_utterance(text: str) -> str:
    text = _BULLET.sub(" ", text)
    text = _BRACKET_CODE.sub(" ", text)
    text = _EVENT.sub(" ", text)
    text = _FILLER.sub("", text)
    text = _UNINTELLIGIBLE.sub(" ", text)
    text = _PAUSE.sub(" ", text)
    text = _OMITTED.sub(r"\1", text)
    text = _TERMINATOR.sub(" . ", text)
    text = _WORD_MARKER.sub("", text)
    text = _RETRACE.sub(" ", text)
    text = text.replace("_", " ")
    return _SPACES.sub(" ", text).strip()


def extract_chat(text: str, participant_only: bool = True) -> str:
    """Utterance text of a CHAT file; *INV and other speakers dropped under participant_only."""
    tiers: list[tuple[str, str]] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line[0] in " \t":
            if tiers:
                speaker, body = tiers[-1]
                tiers[-1] = (speaker, body + " " + line.strip())
            continue
        if line.startswith("*") and ":" in line:
            speaker, body = line[1:].split(":", 1)
            tiers.append((speaker.strip(), body.strip()))
        else:
            # @ headers, % dependent tiers; their continuation lines attach to a dummy tier
            tiers.append(("", ""))
    kept = [
        clean_chat_utterance(body)
        for speaker, body in tiers
        if speaker and (speaker == "PAR" or not participant_only)
    ]
    return " ".join(u for u in kept if u)


def load_transcript(
    path: str | os.PathLike,
    subject_id: str,
    source: str,
    participant_only: bool = True,
) -> Transcript:
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".cha":
        raw = extract_chat(raw, participant_only=participant_only)
    return make_transcript(subject_id, source, raw)
