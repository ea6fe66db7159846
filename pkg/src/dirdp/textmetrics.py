"""Reconstruction-quality metrics over token sequences.

* Jaccard: |A & B| / |A | B| over token sets.
* Cosine: cosine of mean-pooled token embeddings.
* METEOR (exact-match only): 10PR / (R + 9P) * (1 - 0.5 (chunks/matches)^3).
* ROUGE-L: LCS(A, B) / max(|A|, |B|).
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import tokenize


def _tokens(x) -> list[str]:
    return tokenize(x) if isinstance(x, str) else list(x)


def jaccard(a, b) -> float:
    sa, sb = set(_tokens(a)), set(_tokens(b))
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


class EmbeddingTable:
    """Token -> vector lookup with mean pooling over a sequence."""

    def __init__(self, vectors: Mapping[str, Sequence[float]]):
        if not vectors:
            raise ValueError("embedding table is empty")
        self.vectors = {t: np.asarray(v, dtype=float) for t, v in vectors.items()}
        dims = {v.shape for v in self.vectors.values()}
        if len(dims) != 1 or len(next(iter(dims))) != 1:
            raise ValueError(f"embeddings must share one 1-d shape, got {sorted(dims)}")
        zero = [t for t, v in self.vectors.items() if not np.any(v)]
        if zero:
            raise ValueError(f"zero-norm embedding for tokens {zero[:5]}")
        self.dim = next(iter(dims))[0]

    def __contains__(self, token):
        return token in self.vectors

    def pool(self, tokens: Sequence[str]):
        vs = [self.vectors[t] for t in tokens if t in self.vectors]
        return np.mean(vs, axis=0) if vs else None

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        """Read ``token v1 v2 ... vD`` lines (word2vec/GloVe text layout)."""
        vectors = {}
        with Path(path).open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) < 2:
                    raise ValueError(f"{path}:{lineno}: expected a token followed by values")
                try:
                    vectors[parts[0]] = [float(v) for v in parts[1:]]
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: non-numeric embedding value") from None
        return cls(vectors)

    @classmethod
    def one_hot(cls, vocabulary: Mapping[str, int]) -> "EmbeddingTable":
        """Indicator embeddings; the pooled cosine is then bag-of-words cosine."""
        return _OneHotTable(vocabulary)


class _OneHotTable(EmbeddingTable):
    # pools by counting instead of storing V x V indicators
    def __init__(self, vocabulary: Mapping[str, int]):
        self.index = dict(vocabulary)
        self.dim = len(self.index)

    def __contains__(self, token):
        return token in self.index

    def pool(self, tokens: Sequence[str]):
        idx = [self.index[t] for t in tokens if t in self.index]
        if not idx:
            return None
        return np.bincount(idx, minlength=self.dim) / len(idx)


def cosine_similarity(a, b, emb: EmbeddingTable) -> float:
    pa, pb = emb.pool(_tokens(a)), emb.pool(_tokens(b))
    if pa is None:
        raise ValueError("first sequence has no in-vocabulary tokens")
    if pb is None:
        raise ValueError("second sequence has no in-vocabulary tokens")
    na, nb = np.linalg.norm(pa), np.linalg.norm(pb)
    if na == 0 or nb == 0:
        # opposite embeddings can cancel under mean pooling
        return 0.0
    return float(np.clip(pa @ pb / (na * nb), -1.0, 1.0))


def _align(candidate: Sequence[str], reference: Sequence[str]) -> list[tuple[int, int]]:
    """Greedy exact-match alignment, candidate order; prefers extending the current chunk."""
    used = [False] * len(reference)
    positions: dict[str, list[int]] = {}
    for j, tok in enumerate(reference):
        positions.setdefault(tok, []).append(j)
    pairs = []
    prev = None
    for i, tok in enumerate(candidate):
        nxt = None if prev is None else prev + 1
        if nxt is not None and nxt < len(reference) and not used[nxt] and reference[nxt] == tok:
            j = nxt
        else:
            j = next((p for p in positions.get(tok, ()) if not used[p]), None)
        if j is None:
            continue
        used[j] = True
        pairs.append((i, j))
        prev = j
    return pairs


def count_chunks(pairs: Sequence[tuple[int, int]]) -> int:
    """Number of runs that are contiguous in both sequences."""
    chunks = 0
    for k, (i, j) in enumerate(pairs):
        if k == 0 or not (i == pairs[k - 1][0] + 1 and j == pairs[k - 1][1] + 1):
            chunks += 1
    return chunks


def meteor_lite(candidate, reference) -> float:
    cand, ref = _tokens(candidate), _tokens(reference)
    pairs = _align(cand, ref)
    m = len(pairs)
    if m == 0:
        return 0.0
    P, R = m / len(cand), m / len(ref)
    fmean = 10 * P * R / (R + 9 * P)
    penalty = 0.5 * (count_chunks(pairs) / m) ** 3
    return fmean * (1 - penalty)


def lcs_length(a: Sequence, b: Sequence) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(a, b) -> float:
    ta, tb = _tokens(a), _tokens(b)
    if not ta and not tb:
        return 1.0
    return lcs_length(ta, tb) / max(len(ta), len(tb))


def score_all(candidate, reference, emb: EmbeddingTable | None = None) -> dict:
    """All four metrics. Cosine is None without a table and 0 when a side has no known tokens."""
    out = {
        "jaccard": jaccard(candidate, reference),
        "meteor": meteor_lite(candidate, reference),
        "rouge_l": rouge_l(candidate, reference),
        "cosine": None,
    }
    if emb is not None:
        try:
            out["cosine"] = cosine_similarity(candidate, reference, emb)
        except ValueError:
            out["cosine"] = 0.0
    return out
