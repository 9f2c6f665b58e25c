"""Treebank-style word tokenizer with character offsets.

The classic rule cascade: straight quotes become `` and '', commas and
colons split unless they sit between digits, terminal periods and the
clitics of contractions become their own tokens. On top of the cascade we
align every token back to a half-open character span in the original text,
which the span-extraction stage depends on.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


@dataclass(frozen=True)
class TokenSpan:
    surface: str
    start: int
    end: int

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValueError("token span must be non-empty and non-negative")


_STARTING_QUOTES = [
    (re.compile(r'^"'), r"``"),
    (re.compile(r"(``)"), r" \1 "),
    (re.compile(r"([ \(\[{<])(\"|\'{2})"), r"\1 `` "),
]

_PUNCTUATION = [
    (re.compile(r"([:,])([^\d])"), r" \1 \2"),
    (re.compile(r"([:,])$"), r" \1 "),
    (re.compile(r"\.\.\."), r" ... "),
    (re.compile(r"[;@#$%&]"), r" \g<0> "),
    (re.compile(r'([^\.])(\.)([\]\)}>"\']*)\s*$'), r"\1 \2\3 "),
    (re.compile(r"[?!]"), r" \g<0> "),
    (re.compile(r"([^'])' "), r"\1 ' "),
]

_PARENS_BRACKETS = (re.compile(r"[\]\[\(\)\{\}\<\>]"), r" \g<0> ")

_DOUBLE_DASHES = (re.compile(r"--"), r" -- ")

_ENDING_QUOTES = [
    (re.compile(r'"'), " '' "),
    (re.compile(r"(\S)(\'\')"), r"\1 \2 "),
    (re.compile(r"([^' ])('[sS]|'[mM]|'[dD]|') "), r"\1 \2 "),
    (re.compile(r"([^' ])('ll|'LL|'re|'RE|'ve|'VE|n't|N'T) "), r"\1 \2 "),
]

# MacIntyre's contraction splits: cannot -> can not, gonna -> gon na, ...
_CONTRACTIONS = [
    re.compile(pattern)
    for pattern in (
        r"(?i)\b(can)(not)\b",
        r"(?i)\b(d)('ye)\b",
        r"(?i)\b(gim)(me)\b",
        r"(?i)\b(gon)(na)\b",
        r"(?i)\b(got)(ta)\b",
        r"(?i)\b(lem)(me)\b",
        r"(?i)\b(mor)('n)\b",
        r"(?i)\b(wan)(na)\s",
        r"(?i) ('t)(is)\b",
        r"(?i) ('t)(was)\b",
    )
]


def _split_words(text: str) -> list[str]:
    for pattern, repl in _STARTING_QUOTES:
        text = pattern.sub(repl, text)
    for pattern, repl in _PUNCTUATION:
        text = pattern.sub(repl, text)
    pattern, repl = _PARENS_BRACKETS
    text = pattern.sub(repl, text)
    pattern, repl = _DOUBLE_DASHES
    text = pattern.sub(repl, text)
    text = " " + text + " "
    for pattern, repl in _ENDING_QUOTES:
        text = pattern.sub(repl, text)
    for pattern in _CONTRACTIONS:
        text = pattern.sub(r" \1 \2 ", text)
    return text.split()


def _align(tokens: list[str], text: str) -> list[tuple[int, int]]:
    """Map each cascade token to its source span, left to right.

    Every token is verbatim source text except `` and '' which may stand
    for one straight double-quote character.
    """
    spans = []
    pos = 0
    for token in tokens:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if text.startswith(token, pos):
            width = len(token)
        elif token in ('``', "''") and pos < len(text) and text[pos] == '"':
            width = 1
        else:
            raise ValueError(f"cannot align token {token!r} at position {pos} of {text!r}")
        spans.append((pos, pos + width))
        pos += width
    return spans


def tokenize(text: str, lowercase: bool = True) -> list[TokenSpan]:
    """Tokenize ``text`` into offset-carrying tokens.

    Surfaces are lowercased by default; spans always index the original
    string, so ``text[t.start:t.end]`` recovers the raw surface.
    """
    words = _split_words(text)
    spans = _align(words, text)
    out = []
    for word, (start, end) in zip(words, spans):
        out.append(TokenSpan(surface=word.lower() if lowercase else word, start=start, end=end))
    return out
