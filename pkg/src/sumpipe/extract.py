"""Coarse-to-fine facet-aware ranking (C2F-FAR) extractive summarization.

Coarse stage: adjacent-sentence similarity dips split the document into
semantic blocks and only the most central blocks survive. Fine stage: the
sentences closest to their block centroid survive, and a last centrality
ranking over all survivors picks the summary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .cleaning import CleanDocument
from .embed import HashingSentenceEmbedder, cosine, cosine_matrix, embed_batch, mean_vector
from .exceptions import ConfigError, EmptyDocumentError
from .segment import split_sentences

__all__ = [
    "ExtractionConfig",
    "SemanticBlock",
    "ExtractiveSummary",
    "partition_blocks",
    "filter_blocks",
    "score_sentences",
    "final_select",
    "extract",
    "C2FFARSummarizer",
]

# scores closer than this are ties (keeps selections stable under rescaling)
_SCORE_DECIMALS = 12
_BOUNDARY_EPS = 1e-12


@dataclass
class ExtractionConfig:
    boundary_alpha: float = 0.5
    block_keep_ratio: float = 0.6
    sentence_keep_ratio: float = 0.6
    target_sentences: int = 25

    def __post_init__(self):
        for name in ("block_keep_ratio", "sentence_keep_ratio"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ConfigError(f"{name} must be in (0, 1], got {value}")
        if self.target_sentences < 1:
            raise ConfigError(f"target_sentences must be >= 1, got {self.target_sentences}")
        if not math.isfinite(self.boundary_alpha):
            raise ConfigError("boundary_alpha must be finite")


@dataclass
class SemanticBlock:
    first: int
    last: int
    centroid: np.ndarray
    centrality: float = 0.0

    @property
    def indices(self) -> range:
        return range(self.first, self.last + 1)


@dataclass
class ExtractiveSummary:
    source_id: str
    selected: list[int]
    scores: list[float]
    text: str
    sentences: list[str] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"source_id": self.source_id, "selected": list(self.selected),
                "scores": [float(s) for s in self.scores], "text": self.text}

    @classmethod
    def from_dict(cls, data: dict) -> "ExtractiveSummary":
        # selected sentences re-split identically: each one ended on a boundary
        sentences = [s.text for s in split_sentences(data["text"])]
        return cls(data["source_id"], list(data["selected"]), list(data["scores"]), data["text"], sentences)


def _keep_count(ratio: float, m: int) -> int:
    return max(1, math.ceil(round(ratio * m, 9)))


def _top(scored, k):
    """``k`` best (index, score) pairs, ties to the earlier index."""
    ranked = sorted(scored, key=lambda p: (-round(p[1], _SCORE_DECIMALS), p[0]))
    return ranked[:k]


def _mean_other_cosine(vectors) -> np.ndarray:
    m = len(vectors)
    if m == 1:
        return np.zeros(1)
    sims = cosine_matrix(vectors, vectors)
    np.fill_diagonal(sims, 0.0)
    return sims.sum(axis=1) / (m - 1)


def partition_blocks(embeddings, cfg: ExtractionConfig) -> list[SemanticBlock]:
    """Split sentences into contiguous blocks at adjacent-similarity dips.

    A boundary goes between ``i`` and ``i + 1`` when their cosine falls below
    ``mean - boundary_alpha * std`` of all adjacent similarities.
    """
    n = len(embeddings)
    if n == 0:
        raise EmptyDocumentError("cannot partition zero sentences")
    sims = np.array([cosine(embeddings[i], embeddings[i + 1]) for i in range(n - 1)])
    starts = [0]
    if n > 1:
        threshold = sims.mean() - cfg.boundary_alpha * sims.std()
        starts += [i + 1 for i, s in enumerate(sims) if s < threshold - _BOUNDARY_EPS]
    ends = [s - 1 for s in starts[1:]] + [n - 1]
    return [
        SemanticBlock(first, last, mean_vector(embeddings[first:last + 1]))
        for first, last in zip(starts, ends)
    ]


def filter_blocks(blocks: list[SemanticBlock], cfg: ExtractionConfig) -> list[SemanticBlock]:
    if not blocks:
        raise EmptyDocumentError("no blocks to filter")
    centrality = _mean_other_cosine(np.array([b.centroid for b in blocks]))
    for block, c in zip(blocks, centrality):
        block.centrality = float(c)
    keep = _top(list(enumerate(centrality)), _keep_count(cfg.block_keep_ratio, len(blocks)))
    return [blocks[i] for i in sorted(i for i, _ in keep)]


def score_sentences(block: SemanticBlock, embeddings, cfg: ExtractionConfig) -> list[tuple[int, float]]:
    """Relevance of each member sentence to the block centroid, best ones only, by index."""
    scored = [(i, cosine(embeddings[i], block.centroid)) for i in block.indices]
    keep = _top(scored, _keep_count(cfg.sentence_keep_ratio, len(scored)))
    return sorted(keep)


def final_select(candidates, k: int, source_id: str = "", sentences=None) -> ExtractiveSummary:
    """Pick the ``k`` candidates most similar on average to all the others.

    ``candidates`` is a list of ``(sentence_index, vector)``; ``sentences``
    (all document sentences) is only used to build the summary text.
    """
    if not candidates:
        raise EmptyDocumentError("no candidate sentences")
    indices = [i for i, _ in candidates]
    centrality = _mean_other_cosine(np.array([v for _, v in candidates]))
    chosen = sorted(_top(zip(indices, centrality), k))
    selected = [i for i, _ in chosen]
    picked = [sentences[i] for i in selected] if sentences is not None else []
    return ExtractiveSummary(source_id, selected, [float(c) for _, c in chosen], " ".join(picked), picked)


def extract(doc, provider, cfg: ExtractionConfig | None = None, abbreviations=None) -> ExtractiveSummary:
    cfg = cfg or ExtractionConfig()
    if isinstance(doc, str):
        doc = CleanDocument("", doc, len(doc.split()))
    records = split_sentences(doc, abbreviations)
    if not records:
        raise EmptyDocumentError(f"document {doc.source_id!r} has no sentences")
    texts = [r.text for r in records]
    vectors = embed_batch(provider, texts)

    if len(records) <= cfg.target_sentences:
        # nothing to cut: K caps the summary, it never forces filtering
        return final_select(list(enumerate(vectors)), cfg.target_sentences, doc.source_id, texts)

    blocks = filter_blocks(partition_blocks(vectors, cfg), cfg)
    candidates = [
        (i, vectors[i])
        for block in blocks
        for i, _ in score_sentences(block, vectors, cfg)
    ]
    return final_select(candidates, cfg.target_sentences, doc.source_id, texts)


class C2FFARSummarizer(TransformerMixin, BaseEstimator):
    """Unsupervised extractive summarizer with the scikit-learn transformer API.

    ``transform`` maps clean documents (or plain strings) to
    :class:`ExtractiveSummary` objects. Nothing is learned from data, so
    ``fit`` validates parameters and resolves the embedder.

    Parameters
    ----------
    embedder : sentence embedder, default None
        Any object with ``name``, ``dim`` and ``embed_batch``; ``None`` uses
        the offline :class:`~sumpipe.embed.HashingSentenceEmbedder`.
    n_sentences : int, default 25
        Maximum summary length in sentences.
    boundary_alpha : float, default 0.5
        Block boundary threshold, in standard deviations below the mean
        adjacent similarity.
    block_keep_ratio, sentence_keep_ratio : float, default 0.6
        Fraction of blocks, and of sentences within each kept block, retained.
    """

    def __init__(self, embedder=None, n_sentences=25, boundary_alpha=0.5,
                 block_keep_ratio=0.6, sentence_keep_ratio=0.6, abbreviations=None):
        self.embedder = embedder
        self.n_sentences = n_sentences
        self.boundary_alpha = boundary_alpha
        self.block_keep_ratio = block_keep_ratio
        self.sentence_keep_ratio = sentence_keep_ratio
        self.abbreviations = abbreviations

    def _config(self) -> ExtractionConfig:
        return ExtractionConfig(self.boundary_alpha, self.block_keep_ratio,
                                self.sentence_keep_ratio, self.n_sentences)

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        self.embedder_ = self.embedder if self.embedder is not None else HashingSentenceEmbedder()
        return self

    def transform(self, X):
        check_is_fitted(self, "embedder_")
        out = []
        for i, doc in enumerate(X):
            if isinstance(doc, str):
                doc = CleanDocument(f"doc{i}", doc, len(doc.split()))
            out.append(extract(doc, self.embedder_, self.config_, self.abbreviations))
        return out
