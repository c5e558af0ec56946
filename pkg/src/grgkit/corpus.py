"""Corpus and conversation stores: passages, topics, labeled training docs.

File formats (documented in README):
  corpus:   JSON-Lines, one ``{"id", "text", "url"?}`` object per line
  topics:   single JSON object ``{"topics": [...]}``
  labeled:  JSON-Lines, one ``{"text", "label"}`` object per line
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .errors import InputError
from .sentences import split_sentences


class QualityLabel(enum.Enum):
    RELIABLE = "reliable"
    UNRELIABLE = "unreliable"
    JUNK = "junk"


@dataclass(frozen=True)
class Passage:
    """One retrievable corpus unit. ``sentences`` concatenate (modulo
    whitespace) back to ``text``."""

    id: str
    text: str
    url: str | None = None
    sentences: tuple[str, ...] = field(default=())

    @classmethod
    def from_text(cls, id: str, text: str, url: str | None = None) -> "Passage":
        if not id:
            raise InputError("passage id must be non-empty")
        if not text:
            raise InputError(f"passage {id!r}: text must be non-empty")
        return cls(id=id, text=text, url=url, sentences=tuple(split_sentences(text)))


@dataclass(frozen=True)
class PtkbStatement:
    ptkb_id: str
    statement: str


@dataclass(frozen=True)
class Turn:
    turn_id: int
    utterance: str
    canonical_response: str | None = None
    resolved_utterance: str | None = None


@dataclass(frozen=True)
class Topic:
    topic_id: str
    ptkbs: tuple[PtkbStatement, ...]
    turns: tuple[Turn, ...]


@dataclass(frozen=True)
class LabeledDocument:
    text: str
    label: QualityLabel


class CorpusStore:
    """Immutable passage collection with id lookup. Safe for concurrent reads."""

    def __init__(self, passages: list[Passage]):
        self._passages = tuple(passages)
        self._by_id = {p.id: p for p in self._passages}
        if len(self._by_id) != len(self._passages):
            raise InputError("corpus contains duplicate passage ids")

    def __len__(self) -> int:
        return len(self._passages)

    def __iter__(self) -> Iterator[Passage]:
        return iter(self._passages)

    def __getitem__(self, passage_id: str) -> Passage:
        return self._by_id[passage_id]

    def get(self, passage_id: str) -> Passage | None:
        return self._by_id.get(passage_id)

    @property
    def passages(self) -> tuple[Passage, ...]:
        return self._passages


def _read_lines(path: str | Path) -> list[tuple[int, str]]:
    try:
        raw = Path(path).read_text("utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return [(i, line) for i, line in enumerate(raw.splitlines(), start=1) if line.strip()]


def load_corpus(path: str | Path) -> list[Passage]:
    """Load passages from a JSONL file, in file order, sentence-segmented.

    Raises InputError naming the offending line for malformed JSON, missing
    or invalid fields, and duplicate ids.
    """
    passages: list[Passage] = []
    seen: dict[str, int] = {}
    for lineno, line in _read_lines(path):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: malformed JSON on line {lineno}: {exc}") from exc
        if not isinstance(obj, dict):
            raise InputError(f"{path}: line {lineno} is not a JSON object")
        pid = obj.get("id")
        text = obj.get("text")
        url = obj.get("url")
        if not isinstance(pid, str) or not pid:
            raise InputError(f"{path}: line {lineno}: 'id' must be a non-empty string")
        if not isinstance(text, str) or not text:
            raise InputError(f"{path}: line {lineno}: 'text' must be a non-empty string")
        if url is not None and not isinstance(url, str):
            raise InputError(f"{path}: line {lineno}: 'url' must be a string")
        if pid in seen:
            raise InputError(f"duplicate id {pid} (line {lineno})")
        seen[pid] = lineno
        passages.append(Passage.from_text(pid, text, url))
    return passages


def save_corpus(passages: list[Passage], path: str | Path) -> None:
    """Write passages as JSONL; round-trips with load_corpus."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in passages:
            obj: dict = {"id": p.id, "text": p.text}
            if p.url is not None:
                obj["url"] = p.url
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def _schema_error(pointer: str, message: str) -> InputError:
    return InputError(f"topics schema violation at {pointer}: {message}")


def _require_str(value, pointer: str, allow_empty: bool = False) -> str:
    if not isinstance(value, str) or (not allow_empty and not value):
        raise _schema_error(pointer, "expected a non-empty string")
    return value


def load_topics(path: str | Path) -> list[Topic]:
    """Load conversation topics; schema violations raise InputError with a
    JSON pointer to the offending field."""
    try:
        root = json.loads(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON: {exc}") from exc

    if not isinstance(root, dict) or not isinstance(root.get("topics"), list):
        raise _schema_error("/topics", "expected a list of topics")

    topics: list[Topic] = []
    for ti, tobj in enumerate(root["topics"]):
        base = f"/topics/{ti}"
        if not isinstance(tobj, dict):
            raise _schema_error(base, "expected an object")
        topic_id = _require_str(tobj.get("topic_id"), f"{base}/topic_id")

        ptkbs: list[PtkbStatement] = []
        raw_ptkbs = tobj.get("ptkbs")
        if not isinstance(raw_ptkbs, list):
            raise _schema_error(f"{base}/ptkbs", "expected a list")
        seen_ptkb: set[str] = set()
        for pi, pobj in enumerate(raw_ptkbs):
            ppath = f"{base}/ptkbs/{pi}"
            if not isinstance(pobj, dict):
                raise _schema_error(ppath, "expected an object")
            pid = _require_str(pobj.get("ptkb_id"), f"{ppath}/ptkb_id")
            statement = _require_str(pobj.get("statement"), f"{ppath}/statement")
            if pid in seen_ptkb:
                raise _schema_error(f"{ppath}/ptkb_id", f"duplicate ptkb id {pid!r}")
            seen_ptkb.add(pid)
            ptkbs.append(PtkbStatement(pid, statement))

        turns: list[Turn] = []
        raw_turns = tobj.get("turns")
        if not isinstance(raw_turns, list):
            raise _schema_error(f"{base}/turns", "expected a list")
        for ui, uobj in enumerate(raw_turns):
            upath = f"{base}/turns/{ui}"
            if not isinstance(uobj, dict):
                raise _schema_error(upath, "expected an object")
            turn_id = uobj.get("turn_id")
            if not isinstance(turn_id, int) or isinstance(turn_id, bool) or turn_id < 1:
                raise _schema_error(f"{upath}/turn_id", "expected an integer >= 1")
            if turn_id != ui + 1:
                raise _schema_error(f"{upath}/turn_id", f"non-consecutive turn ids (expected {ui + 1}, got {turn_id})")
            utterance = _require_str(uobj.get("utterance"), f"{upath}/utterance")
            canonical = uobj.get("canonical_response")
            if canonical is not None:
                canonical = _require_str(canonical, f"{upath}/canonical_response")
            resolved = uobj.get("resolved_utterance")
            if resolved is not None:
                resolved = _require_str(resolved, f"{upath}/resolved_utterance")
            turns.append(Turn(turn_id, utterance, canonical, resolved))

        topics.append(Topic(topic_id, tuple(ptkbs), tuple(turns)))
    return topics


_LABELS = {label.value: label for label in QualityLabel}


def load_labeled(path: str | Path) -> list[LabeledDocument]:
    """Load labeled training docs from JSONL with labels
    reliable / unreliable / junk."""
    docs: list[LabeledDocument] = []
    for lineno, line in _read_lines(path):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: malformed JSON on line {lineno}: {exc}") from exc
        text = obj.get("text") if isinstance(obj, dict) else None
        label = obj.get("label") if isinstance(obj, dict) else None
        if not isinstance(text, str) or not text:
            raise InputError(f"{path}: line {lineno}: 'text' must be a non-empty string")
        if label not in _LABELS:
            raise InputError(f"{path}: line {lineno}: 'label' must be one of {sorted(_LABELS)}")
        docs.append(LabeledDocument(text, _LABELS[label]))
    return docs
