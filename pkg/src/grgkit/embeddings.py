"""Sentence/passage embeddings behind a provider contract.

The offline provider hashes lowercased word tokens into a fixed number of
buckets and L2-normalizes the counts: a pure, deterministic bag-of-words
stand-in for a neural sentence encoder. The HTTP provider adapts any
embedding server speaking the minimal batch protocol documented in the
README.
"""

from __future__ import annotations

import hashlib
import re
import threading
from dataclasses import dataclass

import numpy as np
import requests

from .errors import InputError, ProviderError

_WORD = re.compile(r"\w+")

DEFAULT_DIMENSION = 384


class EmbeddingError(ProviderError):
    pass


@dataclass(frozen=True)
class EmbeddingConfig:
    kind: str = "hashed_lexical"  # or "http"
    endpoint_url: str | None = None
    dimension: int = DEFAULT_DIMENSION
    timeout: float = 10.0
    seed: int = 1
    max_in_flight: int = 8

    def __post_init__(self):
        if self.kind not in ("hashed_lexical", "http"):
            raise InputError(f"unknown embedding kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint_url:
            raise InputError("http embedding provider requires endpoint_url")
        if self.dimension < 8:
            raise InputError("embedding dimension must be >= 8")


class HashedLexicalEmbedder:
    """Deterministic bag-of-words embedder; no model, no network."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION, seed: int = 1):
        self.dimension = dimension
        self._key = seed.to_bytes(8, "little", signed=True)

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=self._key).digest()
        return int.from_bytes(digest, "big") % self.dimension

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        vectors = []
        for text in texts:
            if not text:
                raise InputError("cannot embed empty text")
            vec = np.zeros(self.dimension, dtype=np.float64)
            for token in _WORD.findall(text.lower()):
                vec[self._bucket(token)] += 1.0
            norm = float(np.linalg.norm(vec))
            if norm > 0.0:
                vec /= norm
            vectors.append(vec)
        return vectors


class HttpEmbedder:
    """POST {"texts": [...]} -> {"vectors": [[...], ...]}; in-flight capped."""

    def __init__(self, cfg: EmbeddingConfig):
        self.cfg = cfg
        self.dimension = cfg.dimension
        self._slots = threading.Semaphore(cfg.max_in_flight)

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        for text in texts:
            if not text:
                raise InputError("cannot embed empty text")
        with self._slots:
            try:
                resp = requests.post(
                    self.cfg.endpoint_url, json={"texts": texts}, timeout=self.cfg.timeout
                )
            except requests.RequestException as exc:
                raise EmbeddingError(f"embedding request failed: {exc}") from exc
        if resp.status_code != 200:
            raise EmbeddingError(f"embedding server returned {resp.status_code}")
        try:
            vectors = resp.json()["vectors"]
        except (ValueError, KeyError) as exc:
            raise EmbeddingError(f"malformed embedding response: {exc}") from exc
        if len(vectors) != len(texts):
            raise EmbeddingError(f"expected {len(texts)} vectors, got {len(vectors)}")
        out = []
        for vec in vectors:
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dimension,):
                raise EmbeddingError(
                    f"expected dimension {self.dimension}, got {arr.shape}"
                )
            norm = float(np.linalg.norm(arr))
            if norm > 0.0:
                arr = arr / norm
            out.append(arr)
        return out


def make_embedder(cfg: EmbeddingConfig):
    if cfg.kind == "http":
        return HttpEmbedder(cfg)
    return HashedLexicalEmbedder(dimension=cfg.dimension, seed=cfg.seed)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector has zero norm."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def rank_by_similarity(embedder, query: str, candidates: list[str]) -> list[tuple[int, float]]:
    """(candidate index, cosine score) pairs, score descending.

    Embeds query and candidates in a single batch. The sort is stable:
    equal scores keep the original candidate order.
    """
    if not candidates:
        raise InputError("candidates must be non-empty")
    vectors = embedder.embed([query] + list(candidates))
    qvec = vectors[0]
    scored = [(i, cosine(qvec, v)) for i, v in enumerate(vectors[1:])]
    return sorted(scored, key=lambda pair: -pair[1])
