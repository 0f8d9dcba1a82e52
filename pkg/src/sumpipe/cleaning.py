"""Turn raw extracted book/article text into clean continuous prose.

The cleaning runs in three steps: blank out configured patterns, weave the
physical lines back into logical lines (dropping page furniture on the way)
and finally normalize characters, whitespace and very short sentences.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field

from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ConfigError
from .segment import split_sentences

__all__ = [
    "CATEGORIES",
    "RawText",
    "CleanConfig",
    "CleanDocument",
    "strip_patterns",
    "weave_lines",
    "normalize",
    "ingest",
    "DocumentCleaner",
]

CATEGORIES = ("business_article", "economic_report", "book", "other")

_SENTENCE_END = re.compile(r"[.!?][\"')\]”’»]?$")
_INLINE_SENTENCE_END = re.compile(r"[.!?][\"')\]”’»]?\s+[\"'(\[“‘]?[A-Z]")
_OPENERS = "\"'([“‘«"
_WHITESPACE = re.compile(r"\s+")
_NON_ASCII = re.compile(r"[^\x00-\x7f]")


@dataclass
class RawText:
    lines: list[str]
    source_id: str = ""

    @classmethod
    def from_string(cls, text: str, source_id: str = "") -> "RawText":
        return cls(text.splitlines(), source_id)


@dataclass
class CleanConfig:
    strip_patterns: list[str] = field(default_factory=list)
    window: int = 5
    min_sentence_words: int = 4
    drop_nonalpha_lines: bool = True
    inline_sentence_ends: bool = True

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.min_sentence_words < 1:
            raise ConfigError(f"min_sentence_words must be >= 1, got {self.min_sentence_words}")

    def compiled_patterns(self) -> list[re.Pattern]:
        compiled = []
        for pattern in self.strip_patterns:
            try:
                compiled.append(re.compile(pattern))
            except re.error as exc:
                raise ConfigError(f"invalid strip pattern {pattern!r}: {exc}") from exc
        return compiled


@dataclass
class CleanDocument:
    source_id: str
    text: str
    word_count: int
    category: str = "other"

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ConfigError(f"unknown category {self.category!r}; expected one of {CATEGORIES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CleanDocument":
        return cls(data["source_id"], data["text"], data["word_count"], data.get("category", "other"))


def strip_patterns(raw: RawText, cfg: CleanConfig) -> RawText:
    """Replace every match of every pattern with a single space, line by line."""
    patterns = cfg.compiled_patterns()
    lines = []
    for line in raw.lines:
        for pattern in patterns:
            line = pattern.sub(" ", line)
        lines.append(line)
    return RawText(lines, raw.source_id)


def _ends_sentence(line: str, inline: bool) -> bool:
    line = line.strip()
    return bool(_SENTENCE_END.search(line) or (inline and _INLINE_SENTENCE_END.search(line)))


def _starts_upper(line: str) -> bool:
    # an opening quote or bracket does not hide the capital behind it
    stripped = line.strip().lstrip(_OPENERS)
    return bool(stripped) and stripped[0].isupper()


def weave_lines(raw: RawText, cfg: CleanConfig) -> RawText:
    """Concatenate physical lines into logical lines, scanning bottom-up.

    Lines without any alphabetic character are dropped first (when
    ``cfg.drop_nonalpha_lines``). Starting from the last line, the ``window``
    lines above the current unit are examined nearest-first:

    1. the nearest line holding a sentence end (terminal punctuation at the
       end of the line or, with ``cfg.inline_sentence_ends``, followed by a
       space and a capital letter inside it) closes the unit; lines between
       it and the unit are prepended to the unit and that line starts the
       next one;
    2. otherwise the nearest line starting with an uppercase letter is taken
       as the unit's first line, together with everything in between;
    3. otherwise the whole window is discarded as noise.
    """
    lines = [line.strip() for line in raw.lines]
    if cfg.drop_nonalpha_lines:
        lines = [line for line in lines if any(ch.isalpha() for ch in line)]
    else:
        lines = [line for line in lines if line]
    if not lines:
        return RawText([], raw.source_id)

    emitted = []
    unit = [lines[-1]]
    p = len(lines) - 2
    while p >= 0:
        window = range(p, max(-1, p - cfg.window), -1)
        end_at = next((j for j in window if _ends_sentence(lines[j], cfg.inline_sentence_ends)), None)
        if end_at is not None:
            unit = lines[end_at + 1:p + 1] + unit
            emitted.append(unit)
            unit = [lines[end_at]]
            p = end_at - 1
            continue
        upper_at = next((j for j in window if _starts_upper(lines[j])), None)
        if upper_at is not None:
            emitted.append(lines[upper_at:p + 1] + unit)
            if upper_at == 0:
                unit = None
                break
            unit = [lines[upper_at - 1]]
            p = upper_at - 2
            continue
        p -= cfg.window
    if unit is not None:
        emitted.append(unit)
    return RawText([" ".join(u) for u in reversed(emitted)], raw.source_id)


def normalize(raw: RawText, cfg: CleanConfig, category: str = "other", abbreviations=None) -> CleanDocument:
    text = _NON_ASCII.sub("", " ".join(raw.lines))
    text = _WHITESPACE.sub(" ", text).strip()
    kept = [
        s.text
        for s in split_sentences(text, abbreviations)
        if s.word_count >= cfg.min_sentence_words
    ]
    text = " ".join(kept)
    return CleanDocument(raw.source_id, text, len(text.split()), category)


def ingest(raw: RawText, cfg: CleanConfig | None = None, category: str = "other", abbreviations=None) -> CleanDocument:
    cfg = cfg or CleanConfig()
    return normalize(weave_lines(strip_patterns(raw, cfg), cfg), cfg, category, abbreviations)


class DocumentCleaner(TransformerMixin, BaseEstimator):
    """Transformer mapping raw text (strings or :class:`RawText`) to :class:`CleanDocument`.

    Stateless: ``fit`` only validates the parameters, so the cleaner can sit
    in front of :class:`~sumpipe.extract.C2FFARSummarizer` in a
    :class:`sklearn.pipeline.Pipeline`.
    """

    def __init__(self, strip_patterns=(), window=5, min_sentence_words=4,
                 drop_nonalpha_lines=True, inline_sentence_ends=True, category="other"):
        self.strip_patterns = strip_patterns
        self.window = window
        self.min_sentence_words = min_sentence_words
        self.drop_nonalpha_lines = drop_nonalpha_lines
        self.inline_sentence_ends = inline_sentence_ends
        self.category = category

    def _config(self) -> CleanConfig:
        cfg = CleanConfig(list(self.strip_patterns), self.window,
                          self.min_sentence_words, self.drop_nonalpha_lines,
                          self.inline_sentence_ends)
        cfg.compiled_patterns()
        return cfg

    def fit(self, X=None, y=None):
        self._config()
        return self

    def transform(self, X):
        cfg = self._config()
        docs = []
        for i, item in enumerate(X):
            if isinstance(item, str):
                item = RawText.from_string(item, f"doc{i}")
            elif not isinstance(item, RawText):
                raise TypeError(f"expected str or RawText, got {type(item).__name__}")
            docs.append(ingest(item, cfg, self.category))
        return docs
