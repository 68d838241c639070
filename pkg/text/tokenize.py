"""
Penn-Treebank-style tokenization.

- most punctuation is split from adjoining words
- verb contractions and the genitive are split: she's -> she 's, won't -> wo n't
- double quotes stay as `"` tokens, so every non-whitespace character of the
  input survives in the token stream
- fillers (uh, um, umm) are ordinary words
"""
from __future__ import annotations

import re

_GLUED_PERIOD = re.compile(r"([a-z])\.([a-z])")
_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+")


class TreebankTokenizer:
    PUNCTUATION = [
        (re.compile(r'"'), r' " '),
        (re.compile(r"([:,])([^\d])"), r" \1 \2"),
        (re.compile(r"([:,])$"), r" \1 "),
        (re.compile(r"\.\.\."), r" ... "),
        (re.compile(r"[;@#$%&]"), r" \g<0> "),
        (re.compile(r"([^\.])(\.)([\]\)}>\"']*)\s*$"), r"\1 \2\3 "),
        (re.compile(r"[?!]"), r" \g<0> "),
        (re.compile(r"([^'])' "), r"\1 ' "),
    ]

    PARENS_BRACKETS = [
        (re.compile(r"[\]\[\(\)\{\}\<\>]"), r" \g<0> "),
        (re.compile(r"--"), r" -- "),
    ]

    CLITICS = [
        (re.compile(r"([^' ])('[sS]|'[mM]|'[dD]|') "), r"\1 \2 "),
        (re.compile(r"([^' ])('ll|'LL|'re|'RE|'ve|'VE|n't|N'T) "), r"\1 \2 "),
    ]

    CONTRACTIONS = [
        re.compile(r"(?i)\b(can)(not)\b"),
        re.compile(r"(?i)\b(d)('ye)\b"),
        re.compile(r"(?i)\b(gim)(me)\b"),
        re.compile(r"(?i)\b(gon)(na)\b"),
        re.compile(r"(?i)\b(got)(ta)\b"),
        re.compile(r"(?i)\b(lem)(me)\b"),
        re.compile(r"(?i)\b(mor)('n)\b"),
        re.compile(r"(?i)\b(wan)(na)\s"),
        re.compile(r"(?i) ('t)(is)\b"),
        re.compile(r"(?i) ('t)(was)\b"),
    ]

    def tokenize(self, text: str) -> list[str]:
        text = _GLUED_PERIOD.sub(r"\1. \2", text.strip())
        tokens: list[str] = []
        for sentence in _SENTENCE_BREAK.split(text):
            if sentence:
                tokens.extend(self._tokenize_sentence(sentence))
        return tokens

    def _tokenize_sentence(self, text: str) -> list[str]:
        for regexp, repl in self.PUNCTUATION:
            text = regexp.sub(repl, text)
        for regexp, repl in self.PARENS_BRACKETS:
            text = regexp.sub(repl, text)
        text = " " + text + " "
        for regexp, repl in self.CLITICS:
            text = regexp.sub(repl, text)
        for regexp in self.CONTRACTIONS:
            text = regexp.sub(r" \1 \2 ", text)
        return text.split()


_TOKENIZER = TreebankTokenizer()


def tokenize_treebank(text: str) -> list[str]:
    return _TOKENIZER.tokenize(text)
