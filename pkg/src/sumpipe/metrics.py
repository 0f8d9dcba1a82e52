"""Summary evaluation: ROUGE, BERTScore, BLANC-help, ESTIME and aggregation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse

from .embed import LexicalMaskedPredictor, HashingTokenEmbedder, cosine_matrix
from .exceptions import EmptyDocumentError
from .segment import ngrams, split_sentences, tokenize

__all__ = [
    "SYSTEMS",
    "METRIC_COLUMNS",
    "RougeScore",
    "MetricReport",
    "AggregateRow",
    "Providers",
    "rouge_n",
    "rouge_l",
    "lcs_length",
    "bertscore_f1",
    "blanc_help",
    "estime",
    "score_pair",
    "aggregate",
]

_SIM_DECIMALS = 12

SYSTEMS = ("human", "c2f_far", "chatgpt")
METRIC_COLUMNS = (
    "rouge1", "rouge2", "rougeL", "bertscore_f1", "blanc_help", "blanc_tune",
    "estime_alarms", "estime_soft", "words_summary",
)


@dataclass
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, overlap, cand_total, ref_total) -> "RougeScore":
        p = overlap / cand_total if cand_total else 0.0
        r = overlap / ref_total if ref_total else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f)


@dataclass
class MetricReport:
    source_id: str
    system: str
    category: str = "other"
    rouge1: RougeScore | None = None
    rouge2: RougeScore | None = None
    rougeL: RougeScore | None = None
    bertscore_f1: float | None = None
    blanc_help: float | None = None
    blanc_tune: float | None = None
    estime_alarms: int | None = None
    estime_soft: float | None = None
    words_summary: int = 0
    errors: list[str] = field(default_factory=list)

    def value(self, column: str):
        """Scalar used in tables; ROUGE columns report F1."""
        v = getattr(self, column)
        return v.f1 if isinstance(v, RougeScore) else v

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        data = dict(data)
        for key in ("rouge1", "rouge2", "rougeL"):
            if data.get(key) is not None:
                data[key] = RougeScore(**data[key])
        return cls(**data)


@dataclass
class AggregateRow:
    label: str
    category: str
    system: str
    count: int
    mean: dict
    std: dict


@dataclass
class Providers:
    token_embedder: object = field(default_factory=HashingTokenEmbedder)
    masked_predictor: object = field(default_factory=LexicalMaskedPredictor)


def rouge_n(candidate, reference, n: int = 1) -> RougeScore:
    cand = ngrams(candidate, n)
    ref = ngrams(reference, n)
    overlap = sum((cand & ref).values())
    return RougeScore.from_counts(overlap, sum(cand.values()), sum(ref.values()))


def lcs_length(a, b) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference) -> RougeScore:
    return RougeScore.from_counts(lcs_length(candidate, reference), len(candidate), len(reference))


def bertscore_f1(candidate, reference, provider) -> float:
    """Greedy-matching F1 over contextual token embeddings, without idf weights."""
    candidate, reference = list(candidate), list(reference)
    if not candidate or not reference:
        raise EmptyDocumentError("BERTScore needs non-empty candidate and reference")
    sims = cosine_matrix(provider.embed_tokens(candidate), provider.embed_tokens(reference))
    precision = sims.max(axis=1).mean()
    recall = sims.max(axis=0).mean()
    if precision + recall <= 0:
        return 0.0
    return float(2 * precision * recall / (precision + recall))


def _text(doc) -> str:
    return doc if isinstance(doc, str) else doc.text


def _maskable(tokens):
    return [i for i, tok in enumerate(tokens) if tok.isalpha() and len(tok) >= 4]


def blanc_help(document, summary: str, provider, mask_every: int = 6) -> float:
    """Accuracy gain of a masked-token predictor given the summary versus filler.

    In every document sentence the maskable tokens (alphabetic, length >= 4)
    at positions 0, ``mask_every``, ``2 * mask_every``, ... of the maskable
    list are hidden one at a time. The filler has as many ``.`` tokens as
    the summary has tokens.
    """
    filler = " ".join(["."] * len(tokenize(summary)))
    helped = baseline = total = 0
    for sentence in split_sentences(_text(document)):
        tokens = tokenize(sentence.text)
        for pos in _maskable(tokens)[::mask_every]:
            truth = tokens[pos]
            helped += provider.predict(summary, tokens, pos) == truth
            baseline += provider.predict(filler, tokens, pos) == truth
            total += 1
    if total == 0:
        raise EmptyDocumentError("document has no maskable tokens")
    return (helped - baseline) / total


def _sentence_token_embeddings(text, provider):
    tokens, vectors = [], []
    for sentence in split_sentences(text):
        toks = tokenize(sentence.text)
        if toks:
            tokens.extend(toks)
            vecs = provider.embed_tokens(toks)
            vectors.append(vecs if sparse.issparse(vecs) else np.asarray(vecs, dtype=float))
    if not tokens:
        return tokens, np.zeros((0, 0))
    if any(sparse.issparse(v) for v in vectors):
        return tokens, sparse.vstack(vectors, format="csr")
    return tokens, np.vstack(vectors)


def estime(document, summary, provider) -> tuple[int, float]:
    """ESTIME alarms and soft score from nearest contextual token matches.

    Token vectors are computed sentence by sentence. Each summary token is
    matched to the most similar document position (earliest on ties) and
    raises an alarm when the matched token differs. The soft score is the
    mean softmax mass (over document positions, temperature 1) that lands on
    positions holding the same token.
    """
    doc_tokens, doc_vecs = _sentence_token_embeddings(_text(document), provider)
    sum_tokens, sum_vecs = _sentence_token_embeddings(summary, provider)
    if not doc_tokens or not sum_tokens:
        raise EmptyDocumentError("ESTIME needs non-empty document and summary")
    sims = cosine_matrix(sum_vecs, doc_vecs)
    # rounding makes float-noise near-ties exact, so the earliest position wins
    best = np.round(sims, _SIM_DECIMALS).argmax(axis=1)
    doc_arr = np.array(doc_tokens, dtype=object)
    alarms = int(sum(doc_tokens[j] != tok for tok, j in zip(sum_tokens, best)))
    weights = np.exp(sims - sims.max(axis=1, keepdims=True))
    weights /= weights.sum(axis=1, keepdims=True)
    same = doc_arr[None, :] == np.array(sum_tokens, dtype=object)[:, None]
    soft = float((weights * same).sum(axis=1).mean())
    return alarms, min(max(soft, 0.0), 1.0)


def score_pair(document, reference_summary, system_summary, providers: Providers | None = None,
               system: str = "c2f_far", source_id: str | None = None, category: str | None = None,
               mask_every: int = 6, blanc_tune: float | None = None) -> MetricReport:
    """Score one summary: reference-based against the reference, reference-free against the document."""
    providers = providers or Providers()
    report = MetricReport(
        source_id if source_id is not None else getattr(document, "source_id", ""),
        system,
        category if category is not None else getattr(document, "category", "other"),
        blanc_tune=blanc_tune,
    )
    system_summary = system_summary or ""
    report.words_summary = len(system_summary.split())
    cand = tokenize(system_summary)
    if not cand:
        report.errors.append("empty system summary")
        zero = RougeScore(0.0, 0.0, 0.0)
        report.rouge1 = report.rouge2 = report.rougeL = zero
        report.bertscore_f1 = report.blanc_help = report.estime_soft = 0.0
        report.estime_alarms = 0
        return report

    if reference_summary:
        ref = tokenize(reference_summary)
        report.rouge1 = rouge_n(cand, ref, 1)
        report.rouge2 = rouge_n(cand, ref, 2)
        report.rougeL = rouge_l(cand, ref)
        try:
            report.bertscore_f1 = bertscore_f1(cand, ref, providers.token_embedder)
        except EmptyDocumentError as exc:
            report.errors.append(f"bertscore: {exc}")

    if providers.masked_predictor is not None:
        try:
            report.blanc_help = blanc_help(document, system_summary, providers.masked_predictor, mask_every)
        except EmptyDocumentError as exc:
            report.errors.append(f"blanc_help: {exc}")
    try:
        report.estime_alarms, report.estime_soft = estime(document, system_summary, providers.token_embedder)
    except EmptyDocumentError as exc:
        report.errors.append(f"estime: {exc}")
    return report


def aggregate(reports, group_by=("category", "system")) -> list[AggregateRow]:
    """Mean and population standard deviation of every metric per group.

    Groups come out sorted by key; groups without reports do not appear.
    Missing values are skipped, and a metric missing everywhere in a group
    is reported as ``None``.
    """
    groups: dict[tuple, list[MetricReport]] = {}
    for r in reports:
        groups.setdefault(tuple(getattr(r, g) for g in group_by), []).append(r)
    rows = []
    for key in sorted(groups):
        members = groups[key]
        mean, std = {}, {}
        for column in METRIC_COLUMNS:
            values = [v for v in (m.value(column) for m in members) if v is not None]
            if values:
                mean[column] = float(np.mean(values))
                std[column] = float(np.std(values))
            else:
                mean[column] = std[column] = None
        attrs = dict(zip(group_by, key))
        category = attrs.get("category", "")
        system = attrs.get("system", "")
        rows.append(AggregateRow(category or system, category, system, len(members), mean, std))
    return rows
