"""Independent brute-force oracles. These deliberately re-derive everything
from raw text and first-principles formulas, sharing no code with the
package implementations they check."""

from __future__ import annotations

import math
import re
from collections import Counter

_WORD = re.compile(r"\w+")


def bf_tokenize(text: str, lowercase: bool, stopwords: frozenset[str]) -> list[str]:
    if lowercase:
        text = text.lower()
    return [t for t in _WORD.findall(text) if t not in stopwords]


def bf_bm25_all(
    doc_texts: list[str],
    query_text: str,
    k1: float,
    b: float,
    lowercase: bool,
    stopwords: frozenset[str],
) -> list[float]:
    """Score the query against every document with the plain BM25 formula."""
    docs = [bf_tokenize(t, lowercase, stopwords) for t in doc_texts]
    n = len(docs)
    avgdl = sum(len(d) for d in docs) / n
    counts = [Counter(d) for d in docs]
    terms = sorted(set(bf_tokenize(query_text, lowercase, stopwords)))
    scores = []
    for i in range(n):
        dl = len(docs[i])
        total = 0.0
        for t in terms:
            tf = counts[i][t]
            if tf == 0:
                continue
            df = sum(1 for c in counts if t in c)
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            total += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl))
        scores.append(total)
    return scores


def bf_ranking(
    doc_ids: list[str],
    doc_texts: list[str],
    query_text: str,
    k1: float,
    b: float,
    lowercase: bool,
    stopwords: frozenset[str],
) -> list[tuple[str, float]]:
    """Full ranking (score desc, id asc), zero-score docs omitted."""
    scores = bf_bm25_all(doc_texts, query_text, k1, b, lowercase, stopwords)
    pairs = [(doc_ids[i], s) for i, s in enumerate(scores) if s > 0.0]
    return sorted(pairs, key=lambda p: (-p[1], p[0]))


def bf_dcg(grades: list[int]) -> float:
    total = 0.0
    for rank0, grade in enumerate(grades):
        total += grade / math.log2(rank0 + 2)
    return total


def bf_ndcg_at_k(ranked_docs: list[str], query_qrels: dict[str, int], k: int) -> float:
    got = [query_qrels.get(d, 0) for d in ranked_docs[:k]]
    ideal = sorted(query_qrels.values(), reverse=True)[:k]
    idcg = bf_dcg(ideal)
    if idcg == 0.0:
        return 0.0
    return bf_dcg(got) / idcg


def bf_success_at_1(ranked_docs: list[str], query_qrels: dict[str, int]) -> int:
    return 1 if ranked_docs and query_qrels.get(ranked_docs[0], 0) >= 1 else 0


def bf_cosine(a, b) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def finite_difference_gradient(loss_fn, params, eps: float = 1e-6):
    """Central-difference gradient of a scalar loss over a flat numpy array."""
    import numpy as np

    grad = np.zeros_like(params)
    for i in range(params.size):
        bumped = params.copy()
        bumped.flat[i] += eps
        up = loss_fn(bumped)
        bumped.flat[i] -= 2 * eps
        down = loss_fn(bumped)
        grad.flat[i] = (up - down) / (2 * eps)
    return grad
