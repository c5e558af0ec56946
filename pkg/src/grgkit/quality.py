"""Passage quality classification: TF-IDF features + multinomial logistic
regression over the labels reliable / unreliable / junk.

Training is full-batch gradient descent on softmax cross-entropy with an L2
penalty on the weights (bias excluded), zero-initialized, so a given
training set always produces the same model.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from random import Random

import numpy as np

from .corpus import LabeledDocument, Passage, QualityLabel
from .errors import InputError
from .index import SearchHit

MODEL_FORMAT = "grg-quality-model"
MODEL_VERSION = 1

CLASS_ORDER: tuple[QualityLabel, ...] = (
    QualityLabel.RELIABLE,
    QualityLabel.UNRELIABLE,
    QualityLabel.JUNK,
)

_WORD = re.compile(r"\w+")


def _tokens(text: str, lowercase: bool) -> list[str]:
    if lowercase:
        text = text.lower()
    return _WORD.findall(text)


class TfidfVectorizer:
    """Vocabulary + smoothed idf: idf(t) = ln((1+N)/(1+df(t))) + 1."""

    def __init__(self, vocabulary: dict[str, int], idf: np.ndarray,
                 max_features: int, lowercase: bool = True):
        self.vocabulary = vocabulary
        self.idf = np.asarray(idf, dtype=np.float64)
        self.max_features = max_features
        self.lowercase = lowercase

    @property
    def n_features(self) -> int:
        return len(self.vocabulary)

    @classmethod
    def fit(cls, docs: list[str], max_features: int = 5000,
            lowercase: bool = True) -> "TfidfVectorizer":
        """Keep the max_features highest-df terms, ties broken by term."""
        if not docs:
            raise InputError("cannot fit a vectorizer on an empty corpus")
        if max_features < 1:
            raise InputError("max_features must be >= 1")
        df: Counter[str] = Counter()
        for doc in docs:
            df.update(set(_tokens(doc, lowercase)))
        kept = sorted(df, key=lambda t: (-df[t], t))[:max_features]
        vocabulary = {t: i for i, t in enumerate(sorted(kept))}
        n = len(docs)
        idf = np.zeros(len(vocabulary), dtype=np.float64)
        for term, col in vocabulary.items():
            idf[col] = math.log((1.0 + n) / (1.0 + df[term])) + 1.0
        return cls(vocabulary, idf, max_features, lowercase)

    def transform(self, doc: str) -> dict[int, float]:
        """Sparse tf*idf vector, L2-normalized; OOV terms are ignored and an
        all-OOV document maps to the zero vector."""
        counts = Counter(_tokens(doc, self.lowercase))
        entries = {
            self.vocabulary[t]: tf * self.idf[self.vocabulary[t]]
            for t, tf in counts.items()
            if t in self.vocabulary
        }
        norm = math.sqrt(sum(v * v for v in entries.values()))
        if norm > 0.0:
            entries = {c: v / norm for c, v in entries.items()}
        return entries

    def transform_dense(self, doc: str) -> np.ndarray:
        vec = np.zeros(self.n_features, dtype=np.float64)
        for col, value in self.transform(doc).items():
            vec[col] = value
        return vec


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 500
    l2_lambda: float = 1e-4


@dataclass
class LogisticModel:
    weights: np.ndarray  # (3, n_features)
    bias: np.ndarray     # (3,)
    l2_lambda: float
    trained_epochs: int
    loss_history: list[float] = field(default_factory=list, repr=False)


def _densify(vectors: list[dict[int, float]] , n_features: int) -> np.ndarray:
    X = np.zeros((len(vectors), n_features), dtype=np.float64)
    for row, sparse in enumerate(vectors):
        for col, value in sparse.items():
            X[row, col] = value
    return X


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=1, keepdims=True)


def loss_and_gradient(
    weights: np.ndarray, bias: np.ndarray, X: np.ndarray, Y: np.ndarray, l2_lambda: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy + (l2/2)*||W||^2 and its exact gradient."""
    n = X.shape[0]
    probs = _softmax(X @ weights.T + bias)
    ce = -float(np.mean(np.log(np.sum(probs * Y, axis=1))))
    loss = ce + 0.5 * l2_lambda * float(np.sum(weights * weights))
    delta = (probs - Y) / n
    grad_w = delta.T @ X + l2_lambda * weights
    grad_b = delta.sum(axis=0)
    return loss, grad_w, grad_b


def train(
    vectors: list[dict[int, float]],
    labels: list[QualityLabel],
    n_features: int,
    cfg: TrainConfig | None = None,
) -> LogisticModel:
    """Deterministic full-batch gradient descent from zero weights."""
    cfg = cfg or TrainConfig()
    if len(vectors) != len(labels):
        raise InputError("vectors and labels must have equal length")
    if not vectors:
        raise InputError("cannot train on an empty set")
    if len(set(labels)) < 2:
        raise InputError("degenerate training set: need examples of at least 2 classes")

    X = _densify(vectors, n_features)
    Y = np.zeros((len(labels), len(CLASS_ORDER)), dtype=np.float64)
    class_index = {label: i for i, label in enumerate(CLASS_ORDER)}
    for row, label in enumerate(labels):
        Y[row, class_index[label]] = 1.0

    weights = np.zeros((len(CLASS_ORDER), n_features), dtype=np.float64)
    bias = np.zeros(len(CLASS_ORDER), dtype=np.float64)
    history: list[float] = []
    loss, grad_w, grad_b = loss_and_gradient(weights, bias, X, Y, cfg.l2_lambda)
    history.append(loss)
    for _ in range(cfg.epochs):
        weights = weights - cfg.learning_rate * grad_w
        bias = bias - cfg.learning_rate * grad_b
        loss, grad_w, grad_b = loss_and_gradient(weights, bias, X, Y, cfg.l2_lambda)
        history.append(loss)
    return LogisticModel(weights, bias, cfg.l2_lambda, cfg.epochs, history)


def classify(
    model: LogisticModel, vectorizer: TfidfVectorizer, text: str
) -> tuple[QualityLabel, np.ndarray]:
    """(label, class probabilities); argmax ties resolve in class order."""
    vec = vectorizer.transform_dense(text)
    probs = _softmax((model.weights @ vec + model.bias)[None, :])[0]
    return CLASS_ORDER[int(np.argmax(probs))], probs


def filter_reliable(
    model: LogisticModel,
    vectorizer: TfidfVectorizer,
    hits: list[tuple[Passage, SearchHit]],
) -> list[tuple[Passage, SearchHit]]:
    """Keep only passages classified reliable; BM25 order untouched."""
    return [
        (passage, hit)
        for passage, hit in hits
        if classify(model, vectorizer, passage.text)[0] is QualityLabel.RELIABLE
    ]


def save_model(model: LogisticModel, vectorizer: TfidfVectorizer, path: str | Path) -> None:
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "class_order": [label.value for label in CLASS_ORDER],
        "lowercase": vectorizer.lowercase,
        "max_features": vectorizer.max_features,
        "vocabulary": vectorizer.vocabulary,
        "idf": vectorizer.idf.tolist(),
        "weights": model.weights.tolist(),
        "bias": model.bias.tolist(),
        "l2_lambda": model.l2_lambda,
        "trained_epochs": model.trained_epochs,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, sort_keys=True)
        fh.write("\n")


def load_model(path: str | Path) -> tuple[LogisticModel, TfidfVectorizer]:
    try:
        payload = json.loads(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed model file: {exc}") from exc
    if payload.get("format") != MODEL_FORMAT or payload.get("version") != MODEL_VERSION:
        raise InputError(f"{path}: not a {MODEL_FORMAT} v{MODEL_VERSION} file")
    if payload["class_order"] != [label.value for label in CLASS_ORDER]:
        raise InputError(f"{path}: unexpected class order {payload['class_order']}")
    vectorizer = TfidfVectorizer(
        vocabulary=payload["vocabulary"],
        idf=np.asarray(payload["idf"], dtype=np.float64),
        max_features=payload["max_features"],
        lowercase=payload["lowercase"],
    )
    model = LogisticModel(
        weights=np.asarray(payload["weights"], dtype=np.float64),
        bias=np.asarray(payload["bias"], dtype=np.float64),
        l2_lambda=payload["l2_lambda"],
        trained_epochs=payload["trained_epochs"],
    )
    return model, vectorizer


def train_quality_filter(
    docs: list[LabeledDocument],
    max_features: int = 5000,
    cfg: TrainConfig | None = None,
) -> tuple[LogisticModel, TfidfVectorizer]:
    """Fit the vectorizer and train the classifier in one step."""
    vectorizer = TfidfVectorizer.fit([d.text for d in docs], max_features=max_features)
    vectors = [vectorizer.transform(d.text) for d in docs]
    model = train(vectors, [d.label for d in docs], vectorizer.n_features, cfg)
    return model, vectorizer


# --- synthetic training data -------------------------------------------------
#
# Desk-scale stand-ins for the three source styles: encyclopedic prose for
# the reliable class, informal opinion for the unreliable class, and
# keyword-stuffed spam for the junk class. The three word pools are
# disjoint, which makes the set linearly separable.

RELIABLE_WORDS = [
    "century", "established", "government", "historical", "institution",
    "literature", "located", "northern", "population", "province",
    "published", "region", "research", "scientific", "species",
    "territory", "university", "approximately", "classified", "derived",
    "economy", "industrial", "monument", "architecture",
]

UNRELIABLE_WORDS = [
    "honestly", "totally", "basically", "folks", "gonna", "stuff",
    "awesome", "weird", "kinda", "literally", "opinion", "reckon",
    "rant", "vibes", "hype", "lol", "random", "apparently",
    "overrated", "underrated", "clueless", "tbh", "imho", "fanboy",
]


def junk_keywords() -> list[str]:
    text = resources.files("grgkit.data").joinpath("junk_keywords.txt").read_text("utf-8")
    return [w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#")]


def build_synthetic_training_set(
    per_class: int = 60, words_per_doc: int = 30, seed: int = 7
) -> list[LabeledDocument]:
    rng = Random(seed)
    pools = [
        (QualityLabel.RELIABLE, RELIABLE_WORDS),
        (QualityLabel.UNRELIABLE, UNRELIABLE_WORDS),
        (QualityLabel.JUNK, junk_keywords()),
    ]
    docs: list[LabeledDocument] = []
    for label, pool in pools:
        for _ in range(per_class):
            words = [rng.choice(pool) for _ in range(words_per_doc)]
            docs.append(LabeledDocument(" ".join(words), label))
    return docs
