"""Rule-based sentence segmentation.

A sentence boundary is a run of terminal punctuation (``.``, ``!``, ``?``)
followed by whitespace and then an uppercase or opening character. A
whitespace-delimited token ending at the punctuation run that matches the
shipped abbreviation list (case-insensitive) blocks the split. The splitter
is total: text with no boundary comes back as a single sentence.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

_TERMINAL_RUN = re.compile(r"[.!?]+")
_OPENING_CHARS = "\"'([{“‘"


@lru_cache(maxsize=1)
def load_abbreviations() -> frozenset[str]:
    """Abbreviation tokens (lowercased, trailing period included)."""
    text = resources.files("grgkit.data").joinpath("abbreviations.txt").read_text("utf-8")
    entries = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            entries.add(line.lower())
    return frozenset(entries)


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) spans of the sentences in ``text``, whitespace-trimmed.

    Spans are non-overlapping, in order, and each maps to a non-empty
    contiguous substring. Falls back to one span covering the whole text.
    """
    abbreviations = load_abbreviations()
    cuts: list[tuple[int, int]] = []  # (sentence end, next sentence start)
    n = len(text)
    for match in _TERMINAL_RUN.finditer(text):
        end = match.end()
        if end >= n or not text[end].isspace():
            continue
        follow = end
        while follow < n and text[follow].isspace():
            follow += 1
        if follow >= n:
            continue
        nxt = text[follow]
        if not (nxt.isupper() or nxt in _OPENING_CHARS):
            continue
        if match.group().endswith("."):
            tok_start = match.start()
            while tok_start > 0 and not text[tok_start - 1].isspace():
                tok_start -= 1
            token = text[tok_start:end].lstrip(_OPENING_CHARS).lower()
            if token in abbreviations:
                continue
        cuts.append((end, follow))

    spans: list[tuple[int, int]] = []
    start = 0
    for end, follow in cuts:
        spans.append((start, end))
        start = follow
    spans.append((start, n))

    trimmed: list[tuple[int, int]] = []
    for a, b in spans:
        while a < b and text[a].isspace():
            a += 1
        while b > a and text[b - 1].isspace():
            b -= 1
        if b > a:
            trimmed.append((a, b))
    if not trimmed:
        return [(0, n)]
    return trimmed


def split_sentences(text: str) -> list[str]:
    """Split ``text`` into sentences; never returns an empty list."""
    if not text:
        raise ValueError("cannot split empty text")
    return [text[a:b] for a, b in sentence_spans(text)]
