"""Rule-based sentence splitting, word tokenization and n-grams."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

__all__ = [
    "SentenceRecord",
    "load_abbreviations",
    "split_sentences",
    "tokenize",
    "ngrams",
]

# terminal punctuation, optionally closed by quotes/brackets
_TERMINAL = re.compile(r"[.!?]+[\"')\]”’]*")
_NEXT_STARTS_SENTENCE = re.compile(r"\s+[\"'(\[“‘]?[A-Z]")
_TOKEN = re.compile(r"[^\W_]+")
_INITIAL = re.compile(r"^[A-Z]\.$")


@dataclass(frozen=True)
class SentenceRecord:
    index: int
    text: str
    span: tuple[int, int]
    word_count: int


@lru_cache(maxsize=None)
def _bundled_abbreviations() -> frozenset[str]:
    raw = resources.files("sumpipe").joinpath("data/abbreviations.txt").read_text("utf-8")
    return _parse_abbreviations(raw)


def _parse_abbreviations(raw: str) -> frozenset[str]:
    return frozenset(line.strip() for line in raw.splitlines() if line.strip())


def load_abbreviations(path: str | Path | None = None) -> frozenset[str]:
    """Load an abbreviation list (one entry per line); ``None`` gives the bundled list."""
    if path is None:
        return _bundled_abbreviations()
    return _parse_abbreviations(Path(path).read_text("utf-8"))


def _is_abbreviation(text: str, punct_start: int, punct_end: int, abbreviations) -> bool:
    token_start = punct_start
    while token_start > 0 and not text[token_start - 1].isspace():
        token_start -= 1
    token = text[token_start:punct_end].lstrip("\"'([“‘")
    return token in abbreviations or bool(_INITIAL.match(token))


def split_sentences(doc, abbreviations=None) -> list[SentenceRecord]:
    """Split ``doc`` (a string or anything with a ``text`` attribute) into sentences.

    A boundary follows ``.``, ``!`` or ``?`` when the next non-space
    character is an uppercase letter (optionally behind an opening quote or
    bracket) or when the text ends there. Tokens found in the abbreviation
    list, and single-letter initials, never end a sentence.
    """
    text = doc if isinstance(doc, str) else doc.text
    if abbreviations is None:
        abbreviations = _bundled_abbreviations()

    ends = []
    for m in _TERMINAL.finditer(text):
        rest = text[m.end():]
        if rest.strip() and not _NEXT_STARTS_SENTENCE.match(rest):
            continue
        if rest.strip() and _is_abbreviation(text, m.start(), m.start() + 1, abbreviations):
            continue
        ends.append(m.end())

    records = []
    pos = 0
    for end in ends + [len(text)]:
        start = pos
        while start < end and text[start].isspace():
            start += 1
        stop = end
        while stop > start and text[stop - 1].isspace():
            stop -= 1
        if stop > start:
            chunk = text[start:stop]
            records.append(SentenceRecord(len(records), chunk, (start, stop), len(chunk.split())))
        pos = end
    return records


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; any non-alphanumeric character separates tokens."""
    return _TOKEN.findall(text.lower())


def ngrams(tokens, n: int) -> Counter:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    tokens = list(tokens)
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
