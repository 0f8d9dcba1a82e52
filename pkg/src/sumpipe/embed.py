"""Embedding and masked-prediction providers.

Three provider contracts are used across the package:

* sentence embedders (``embed_batch(texts) -> (n, dim) array``) feed the
  extractor;
* token embedders (``embed_tokens(tokens) -> (len, dim)`` dense or sparse matrix) feed
  BERTScore and ESTIME;
* masked predictors (``predict(context, passage, mask_index) -> token``)
  feed BLANC.

Deterministic hashing mocks ship for all three so everything runs offline.
"""

from __future__ import annotations

import logging
import os
import time
import warnings
import zlib
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Protocol, Sequence, runtime_checkable

import httpx
import numpy as np
from scipy import sparse

from .exceptions import ProviderError
from .segment import tokenize

logger = logging.getLogger(__name__)

__all__ = [
    "SentenceEmbedder",
    "TokenEmbedder",
    "MaskedPredictor",
    "HashingSentenceEmbedder",
    "HashingTokenEmbedder",
    "LexicalMaskedPredictor",
    "RemoteSentenceEmbedder",
    "WindowedTokenEmbedder",
    "embed_batch",
    "cosine",
    "cosine_matrix",
    "mean_vector",
]

MISS_TOKEN = "[UNK]"
_CONTEXT_SALT = "\x00ctx:"


@runtime_checkable
class SentenceEmbedder(Protocol):
    name: str
    dim: int

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray: ...


@runtime_checkable
class TokenEmbedder(Protocol):
    name: str
    dim: int

    def embed_tokens(self, tokens: Sequence[str]) -> np.ndarray: ...


@runtime_checkable
class MaskedPredictor(Protocol):
    """Predicts ``passage[mask_index]`` after it has been hidden.

    Adapters wrapping a real model must replace ``passage[mask_index]`` by
    their mask token before querying; the lexical mock instead uses it as the
    answer key.
    """

    name: str

    def predict(self, context: str, passage: Sequence[str], mask_index: int) -> str: ...


def _bucket(s: str, dim: int) -> int:
    return zlib.crc32(s.encode("utf-8")) % dim


class HashingSentenceEmbedder:
    """L2-normalized counts of character 3-grams hashed into ``dim`` buckets."""

    def __init__(self, dim: int = 16):
        self.name = f"hash-char3-{dim}"
        self.dim = dim

    def _embed(self, text: str) -> np.ndarray:
        text = text.lower()
        grams = [text[i:i + 3] for i in range(len(text) - 2)] or [text]
        vec = np.zeros(self.dim)
        for gram, count in Counter(grams).items():
            vec[_bucket(gram, self.dim)] += count
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

    def embed_batch(self, texts):
        return np.array([self._embed(t) for t in texts]).reshape(len(texts), self.dim)


class HashingTokenEmbedder:
    """Sparse one-hot token buckets blended 50/50 with the mean one-hot of the neighbours.

    Neighbour features are hashed with their own salt, so "a b" and "b a"
    do not collapse onto the same vector, and the default bucket space is
    large enough that collisions are negligible. A token without neighbours
    is represented by its own one-hot vector. Rows come back as a CSR matrix.
    """

    def __init__(self, dim: int = 2 ** 20):
        self.name = f"hash-token-ctx-{dim}"
        self.dim = dim

    def embed_tokens(self, tokens):
        rows, cols, vals = [], [], []
        n = len(tokens)
        for i, tok in enumerate(tokens):
            neighbours = [tokens[j] for j in (i - 1, i + 1) if 0 <= j < n]
            own = 0.5 if neighbours else 1.0
            rows.append(i)
            cols.append(_bucket(tok, self.dim))
            vals.append(own)
            for nb in neighbours:
                rows.append(i)
                cols.append(_bucket(_CONTEXT_SALT + nb, self.dim))
                vals.append(0.5 / len(neighbours))
        # duplicate (row, col) entries are summed, as a blend of one-hots should be
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n, self.dim))


class LexicalMaskedPredictor:
    """Answers correctly iff the hidden token occurs in the context, else ``[UNK]``."""

    name = "lexical-oracle"

    def predict(self, context, passage, mask_index):
        answer = passage[mask_index].lower()
        return answer if answer in set(tokenize(context)) else MISS_TOKEN


class WindowedTokenEmbedder:
    """Contextual token vectors from a sentence embedder.

    Each token is embedded as the text of its surrounding window, so the
    same word gets different vectors in different contexts.
    """

    def __init__(self, sentence_embedder: SentenceEmbedder, radius: int = 2):
        self.sentence_embedder = sentence_embedder
        self.radius = radius
        self.name = f"windowed-{radius}:{sentence_embedder.name}"

    @property
    def dim(self):
        return self.sentence_embedder.dim

    def embed_tokens(self, tokens):
        r = self.radius
        windows = [
            " ".join(tokens[max(0, i - r):i] + [tokens[i].upper()] + tokens[i + 1:i + 1 + r])
            for i in range(len(tokens))
        ]
        return np.asarray(embed_batch(self.sentence_embedder, windows))


class RemoteSentenceEmbedder:
    """Client for an OpenAI-style ``/v1/embeddings`` endpoint.

    Texts are sent in batches of ``batch_size`` with at most ``max_in_flight``
    concurrent requests; each batch is retried ``max_retries`` times with
    exponential backoff before a :class:`ProviderError` naming the batch is
    raised.
    """

    def __init__(self, model, base_url=None, api_key=None, batch_size=64,
                 max_retries=3, max_in_flight=4, timeout=60.0, backoff=1.0,
                 transport=None):
        self.name = model
        self.model = model
        self.base_url = (base_url or os.environ.get("SUMPIPE_API_BASE") or "").rstrip("/")
        self.api_key = api_key or os.environ.get("SUMPIPE_API_KEY")
        if not self.base_url:
            raise ProviderError("no embeddings base URL (set SUMPIPE_API_BASE)", retryable=False)
        self.batch_size = batch_size
        self.max_retries = max_retries
        self.max_in_flight = max_in_flight
        self.timeout = timeout
        self.backoff = backoff
        self.dim = None
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def _post(self, batch_index, texts):
        url = f"{self.base_url}/v1/embeddings"
        payload = {"model": self.model, "input": list(texts)}
        delay = self.backoff
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._client.post(url, json=payload)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise httpx.HTTPStatusError(f"status {resp.status_code}", request=resp.request, response=resp)
                if resp.status_code >= 400:
                    raise ProviderError(f"embeddings request rejected with status {resp.status_code}: {resp.text[:200]}",
                                        retryable=False, batch_index=batch_index)
                data = sorted(resp.json()["data"], key=lambda d: d["index"])
                return [d["embedding"] for d in data]
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                if attempt == self.max_retries:
                    raise ProviderError(f"embeddings batch {batch_index} failed: {exc}",
                                        batch_index=batch_index) from exc
                logger.warning("embeddings batch %d attempt %d failed (%s); retrying in %.1fs",
                               batch_index, attempt + 1, exc, delay)
                time.sleep(delay)
                delay *= 2

    def embed_batch(self, texts):
        batches = [texts[i:i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            results = list(pool.map(self._post, range(len(batches)), batches))
        vectors = [v for batch, vecs in zip(batches, results) for v in vecs]
        if len(vectors) != len(texts):
            raise ProviderError(f"expected {len(texts)} embeddings, got {len(vectors)}", retryable=False)
        arr = np.asarray(vectors, dtype=float)
        if self.dim is None:
            self.dim = arr.shape[1]
        return arr


def embed_batch(provider: SentenceEmbedder, texts: Sequence[str]) -> list[np.ndarray]:
    """Embed ``texts`` and check the provider honoured its contract."""
    texts = list(texts)
    for i, t in enumerate(texts):
        if not isinstance(t, str) or not t:
            raise ValueError(f"text {i} must be a non-empty string")
    if not texts:
        return []
    arr = np.asarray(provider.embed_batch(texts), dtype=float)
    if arr.ndim != 2 or arr.shape[0] != len(texts):
        raise ProviderError(f"provider {provider.name} returned shape {arr.shape} for {len(texts)} texts",
                            retryable=False)
    if provider.dim is not None and arr.shape[1] != provider.dim:
        raise ProviderError(f"provider {provider.name} returned dim {arr.shape[1]}, expected {provider.dim}",
                            retryable=False)
    if not np.all(np.isfinite(arr)):
        raise ProviderError(f"provider {provider.name} returned non-finite values", retryable=False)
    return list(arr)


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        warnings.warn("cosine of a zero vector; returning 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _rows(M):
    if sparse.issparse(M):
        M = sparse.csr_matrix(M, dtype=float)
        return M, np.sqrt(np.asarray(M.multiply(M).sum(axis=1)).ravel())
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return M, np.linalg.norm(M, axis=1)


def cosine_matrix(A, B) -> np.ndarray:
    """Pairwise cosines between the rows of ``A`` and ``B`` (zero rows give 0).

    Either argument may be a dense array or a scipy sparse matrix.
    """
    A, na = _rows(A)
    B, nb = _rows(B)
    if np.any(na == 0) or np.any(nb == 0):
        warnings.warn("cosine of a zero vector; returning 0", RuntimeWarning, stacklevel=2)
    na[na == 0] = np.inf
    nb[nb == 0] = np.inf
    dots = A @ B.T
    if sparse.issparse(dots):
        dots = dots.toarray()
    return np.clip(np.asarray(dots) / np.outer(na, nb), -1.0, 1.0)


def mean_vector(vs) -> np.ndarray:
    vs = [np.asarray(v, dtype=float) for v in vs]
    if not vs:
        raise ValueError("mean_vector needs at least one vector")
    if len({v.shape for v in vs}) != 1:
        raise ValueError("mean_vector needs vectors of equal dimension")
    return np.mean(vs, axis=0)
