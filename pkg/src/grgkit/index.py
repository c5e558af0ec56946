"""From-scratch inverted index with BM25 ranking.

Scoring uses the non-negative idf variant ln(1 + (N - df + 0.5)/(df + 0.5))
so very common terms never contribute negative scores. Contributions are
summed over the unique query terms in sorted order, which keeps search()
and bm25_score() bit-identical.
"""

from __future__ import annotations

import json
import math
import re
from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable

from .corpus import Passage
from .errors import InputError

INDEX_FORMAT = "grg-index"
INDEX_VERSION = 1

_WORD = re.compile(r"\w+")


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    text = resources.files("grgkit.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


@dataclass(frozen=True)
class IndexConfig:
    k1: float = 0.9
    b: float = 0.4
    lowercase: bool = True
    stopwords: frozenset[str] = field(default_factory=default_stopwords)

    def __post_init__(self):
        if self.k1 < 0:
            raise InputError("k1 must be >= 0")
        if not 0.0 <= self.b <= 1.0:
            raise InputError("b must be in [0, 1]")


def tokenize(text: str, cfg: IndexConfig) -> list[str]:
    """Unicode word tokens, lowercased per config, stopwords removed."""
    if cfg.lowercase:
        text = text.lower()
    return [t for t in _WORD.findall(text) if t not in cfg.stopwords]


@dataclass(frozen=True)
class SearchHit:
    passage_id: str
    score: float
    rank: int


class InvertedIndex:
    """Immutable after construction; any number of readers may search."""

    def __init__(
        self,
        config: IndexConfig,
        ids: list[str],
        doc_lengths: list[int],
        postings: dict[str, list[tuple[int, int]]],
    ):
        self.config = config
        self.ids = list(ids)
        self.doc_lengths = list(doc_lengths)
        self.postings = postings
        self.doc_count = len(self.ids)
        if self.doc_count < 1:
            raise InputError("index requires at least one document")
        self.avg_doc_length = sum(self.doc_lengths) / self.doc_count
        if self.avg_doc_length <= 0:
            raise InputError("corpus has no indexable terms")
        self._ordinal_by_id = {pid: i for i, pid in enumerate(self.ids)}

    def ordinal(self, passage_id: str) -> int:
        return self._ordinal_by_id[passage_id]

    def term_frequency(self, term: str, ordinal: int) -> int:
        plist = self.postings.get(term)
        if not plist:
            return 0
        i = bisect_left(plist, (ordinal,))
        if i < len(plist) and plist[i][0] == ordinal:
            return plist[i][1]
        return 0

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        n = self.doc_count
        return math.log1p((n - df + 0.5) / (df + 0.5))


def build_index(passages: Iterable[Passage], cfg: IndexConfig | None = None) -> InvertedIndex:
    """Index passages in order; ordinals are list positions."""
    cfg = cfg or IndexConfig()
    ids: list[str] = []
    doc_lengths: list[int] = []
    postings: dict[str, list[tuple[int, int]]] = {}
    for ordinal, passage in enumerate(passages):
        tokens = tokenize(passage.text, cfg)
        ids.append(passage.id)
        doc_lengths.append(len(tokens))
        for term, tf in sorted(Counter(tokens).items()):
            postings.setdefault(term, []).append((ordinal, tf))
    if not ids:
        raise InputError("cannot build an index over an empty corpus")
    return InvertedIndex(cfg, ids, doc_lengths, postings)


def _term_weight(index: InvertedIndex, term: str, tf: int, dl: int) -> float:
    if tf == 0:
        return 0.0
    cfg = index.config
    norm = cfg.k1 * (1.0 - cfg.b + cfg.b * dl / index.avg_doc_length)
    return index.idf(term) * tf * (cfg.k1 + 1.0) / (tf + norm)


def bm25_score(index: InvertedIndex, query_terms: Iterable[str], ordinal: int) -> float:
    """BM25 score of one document against the unique query terms."""
    if not 0 <= ordinal < index.doc_count:
        raise InputError(f"ordinal {ordinal} out of range")
    dl = index.doc_lengths[ordinal]
    score = 0.0
    for term in sorted(set(query_terms)):
        score += _term_weight(index, term, index.term_frequency(term, ordinal), dl)
    return score


def search(index: InvertedIndex, query_text: str, top_k: int) -> list[SearchHit]:
    """Top-k hits by BM25, score descending, ties by passage id ascending.

    Documents matching no query term (score 0) are omitted.
    """
    if top_k < 1:
        raise InputError("top_k must be >= 1")
    terms = sorted(set(tokenize(query_text, index.config)))
    scores: dict[int, float] = {}
    for term in terms:
        for ordinal, tf in index.postings.get(term, ()):
            w = _term_weight(index, term, tf, index.doc_lengths[ordinal])
            scores[ordinal] = scores.get(ordinal, 0.0) + w
    ranked = sorted(
        ((s, index.ids[o]) for o, s in scores.items() if s > 0.0),
        key=lambda pair: (-pair[0], pair[1]),
    )
    return [
        SearchHit(passage_id=pid, score=s, rank=i + 1)
        for i, (s, pid) in enumerate(ranked[:top_k])
    ]


def save_index(index: InvertedIndex, path: str | Path, corpus_path: str | None = None) -> None:
    """Persist to a versioned JSON file. ``corpus_path`` records where the
    passage texts live so `grg run` can find them again."""
    payload = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "k1": index.config.k1,
        "b": index.config.b,
        "lowercase": index.config.lowercase,
        "stopwords": sorted(index.config.stopwords),
        "corpus_path": corpus_path,
        "ids": index.ids,
        "doc_lengths": index.doc_lengths,
        "postings": {t: [[o, tf] for o, tf in plist] for t, plist in index.postings.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, sort_keys=True)
        fh.write("\n")


def load_index(path: str | Path) -> tuple[InvertedIndex, str | None]:
    """Load an index file; returns (index, recorded corpus path)."""
    try:
        payload = json.loads(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed index file: {exc}") from exc
    if payload.get("format") != INDEX_FORMAT or payload.get("version") != INDEX_VERSION:
        raise InputError(f"{path}: not a {INDEX_FORMAT} v{INDEX_VERSION} file")
    cfg = IndexConfig(
        k1=payload["k1"],
        b=payload["b"],
        lowercase=payload["lowercase"],
        stopwords=frozenset(payload["stopwords"]),
    )
    postings = {t: [(int(o), int(tf)) for o, tf in plist] for t, plist in payload["postings"].items()}
    index = InvertedIndex(cfg, payload["ids"], payload["doc_lengths"], postings)
    return index, payload.get("corpus_path")
