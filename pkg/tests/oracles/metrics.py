"""Brute-force metric oracles in plain Python (no numpy)."""

import itertools
import math
import zlib

from sumpipe.segment import split_sentences, tokenize

DIM = 2 ** 20
SALT = "\x00ctx:"


# ROUGE

def ngram_list(seq, n):
    return [tuple(seq[i:i + n]) for i in range(len(seq) - n + 1)]


def overlap(cand, ref):
    """Multiset intersection size by explicit removal."""
    pool = list(ref)
    hits = 0
    for g in cand:
        if g in pool:
            pool.remove(g)
            hits += 1
    return hits


def prf(hits, c, r):
    p = hits / c if c else 0.0
    q = hits / r if r else 0.0
    return p, q, (2 * p * q / (p + q) if p + q else 0.0)


def rouge_n(cand, ref, n):
    c, r = ngram_list(cand, n), ngram_list(ref, n)
    return prf(overlap(c, r), len(c), len(r))


def is_subsequence(sub, seq):
    it = iter(seq)
    return all(x in it for x in sub)


def lcs(a, b):
    """Longest common subsequence by exhaustive search over subsets of the shorter sequence."""
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    for size in range(len(short), 0, -1):
        for idx in itertools.combinations(range(len(short)), size):
            if is_subsequence([short[i] for i in idx], long_):
                return size
    return 0


def rouge_l(cand, ref):
    return prf(lcs(cand, ref), len(cand), len(ref))


# token mock as sparse dicts

def bucket(s):
    return zlib.crc32(s.encode("utf-8")) % DIM


def token_vectors(tokens):
    out = []
    for i, tok in enumerate(tokens):
        nbs = [tokens[j] for j in (i - 1, i + 1) if 0 <= j < len(tokens)]
        v = {}
        v[bucket(tok)] = v.get(bucket(tok), 0.0) + (0.5 if nbs else 1.0)
        for nb in nbs:
            k = bucket(SALT + nb)
            v[k] = v.get(k, 0.0) + 0.5 / len(nbs)
        out.append(v)
    return out


def dcos(u, v):
    dot = sum(x * v.get(k, 0.0) for k, x in u.items())
    nu = math.sqrt(sum(x * x for x in u.values()))
    nv = math.sqrt(sum(x * x for x in v.values()))
    return dot / (nu * nv) if nu and nv else 0.0


def bertscore(cand, ref, vectors=token_vectors, cos=dcos):
    cv, rv = vectors(cand), vectors(ref)
    sims = [[cos(a, b) for b in rv] for a in cv]
    p = sum(max(row) for row in sims) / len(cv)
    r = sum(max(sims[i][j] for i in range(len(cv))) for j in range(len(rv))) / len(rv)
    return 2 * p * r / (p + r) if p + r else 0.0


# BLANC-help with the lexical predictor

def blanc(document, summary, every=6):
    context = set(tokenize(summary))
    filler = set(tokenize(" ".join(["."] * len(tokenize(summary)))))
    s = b = n = 0
    for sent in split_sentences(document):
        toks = tokenize(sent.text)
        maskable = [t for t in toks if t.isalpha() and len(t) >= 4]
        for t in maskable[::every]:
            s += t in context
            b += t in filler
            n += 1
    return (s - b) / n


# ESTIME

def estime(document, summary, vectors=token_vectors, cos=dcos):
    def embed(text):
        toks, vecs = [], []
        for sent in split_sentences(text):
            t = tokenize(sent.text)
            toks += t
            vecs += vectors(t) if t else []
        return toks, vecs

    dt, dv = embed(document)
    st, sv = embed(summary)
    alarms, soft = 0, 0.0
    for tok, v in zip(st, sv):
        sims = [round(cos(v, w), 12) for w in dv]
        best = max(range(len(sims)), key=lambda j: (sims[j], -j))
        alarms += dt[best] != tok
        top = max(sims)
        weights = [math.exp(x - top) for x in sims]
        soft += sum(w for w, d in zip(weights, dt) if d == tok) / sum(weights)
    return alarms, soft / len(st)
