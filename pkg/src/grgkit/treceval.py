"""TREC run-file emission and evaluation: success@1, nDCG@5, nDCG@10.

nDCG uses the linear gain rel / log2(rank + 1), the trec-eval "ndcg_cut"
convention. Queries missing from the qrels are skipped (listed, not scored
zero). success@1 counts a query when its rank-1 document has grade >= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from .errors import InputError
from .pipeline import TurnResult

METRICS = ("success_1", "ndcg_cut_5", "ndcg_cut_10")

Qrels = dict[str, dict[str, int]]


def load_qrels(path: str | Path) -> Qrels:
    """Parse whitespace-separated "qid 0 docid grade" lines."""
    qrels: Qrels = {}
    try:
        raw = Path(path).read_text("utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise InputError(f"{path}: line {lineno}: expected 'qid 0 docid grade'")
        qid, _, docid, grade = parts
        try:
            value = int(grade)
        except ValueError as exc:
            raise InputError(f"{path}: line {lineno}: grade must be an integer") from exc
        if value < 0:
            raise InputError(f"{path}: line {lineno}: grade must be >= 0")
        qrels.setdefault(qid, {})[docid] = value
    return qrels


def load_run(path: str | Path) -> dict[str, list[str]]:
    """Parse a TREC run file into qid -> doc ids in rank order."""
    rows: dict[str, list[tuple[int, str]]] = {}
    try:
        raw = Path(path).read_text("utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 6:
            raise InputError(f"{path}: line {lineno}: expected 'qid Q0 docid rank score tag'")
        qid, _, docid, rank, _score, _tag = parts
        try:
            rows.setdefault(qid, []).append((int(rank), docid))
        except ValueError as exc:
            raise InputError(f"{path}: line {lineno}: rank must be an integer") from exc
    return {
        qid: [docid for _, docid in sorted(pairs)]
        for qid, pairs in rows.items()
    }


def run_tag(path: str | Path) -> str:
    """The tag column of the first run line, or the file stem."""
    for line in Path(path).read_text("utf-8").splitlines():
        parts = line.split()
        if len(parts) == 6:
            return parts[5]
    return Path(path).stem


def emit_run_file(results: list[TurnResult], tag: str, path: str | Path) -> None:
    """One "qid Q0 docid rank score tag" line per provenance entry,
    sorted by (qid, rank). Ordering violations fail before writing."""
    if not results:
        raise InputError("no results to emit")
    lines: list[tuple[str, int, str]] = []
    for result in results:
        qid = f"{result.topic_id}_{result.turn_id}"
        prev_score = None
        for i, hit in enumerate(result.provenance):
            if hit.rank != i + 1:
                raise InputError(f"{qid}: provenance ranks must be consecutive from 1")
            if prev_score is not None and hit.score > prev_score:
                raise InputError(f"{qid}: provenance scores must be non-increasing")
            prev_score = hit.score
            lines.append((qid, hit.rank, f"{qid} Q0 {hit.passage_id} {hit.rank} {hit.score:.6f} {tag}"))
    lines.sort(key=lambda row: (row[0], row[1]))
    with open(path, "w", encoding="utf-8") as fh:
        for _, _, line in lines:
            fh.write(line + "\n")


def ndcg_at_k(ranked_docs: list[str], query_qrels: dict[str, int], k: int) -> float:
    """DCG@k / IDCG@k with linear gain; 0.0 when the query has no relevant
    documents at all."""
    if k < 1:
        raise InputError("k must be >= 1")
    dcg = 0.0
    for i, docid in enumerate(ranked_docs[:k]):
        dcg += query_qrels.get(docid, 0) / math.log2(i + 2)
    ideal = sorted(query_qrels.values(), reverse=True)[:k]
    idcg = 0.0
    for i, grade in enumerate(ideal):
        idcg += grade / math.log2(i + 2)
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def success_at_1(ranked_docs: list[str], query_qrels: dict[str, int]) -> int:
    """1 iff the top-ranked document has grade >= 1."""
    if not ranked_docs:
        return 0
    return 1 if query_qrels.get(ranked_docs[0], 0) >= 1 else 0


@dataclass
class MetricReport:
    tag: str
    per_query: dict[str, dict[str, float]] = dc_field(default_factory=dict)
    skipped: list[str] = dc_field(default_factory=list)

    @property
    def means(self) -> dict[str, float]:
        if not self.per_query:
            return {metric: 0.0 for metric in METRICS}
        n = len(self.per_query)
        return {
            metric: sum(q[metric] for q in self.per_query.values()) / n
            for metric in METRICS
        }

    def to_json(self) -> dict:
        return {
            "tag": self.tag,
            "per_query": self.per_query,
            "means": self.means,
            "skipped": self.skipped,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "MetricReport":
        return cls(
            tag=payload["tag"],
            per_query=payload["per_query"],
            skipped=list(payload.get("skipped", [])),
        )


def evaluate_run(run: dict[str, list[str]], qrels: Qrels, tag: str = "run") -> MetricReport:
    """Score every run query present in the qrels; list the rest as skipped."""
    report = MetricReport(tag=tag)
    for qid in sorted(run):
        if qid not in qrels:
            report.skipped.append(qid)
            continue
        ranked = run[qid]
        report.per_query[qid] = {
            "success_1": float(success_at_1(ranked, qrels[qid])),
            "ndcg_cut_5": ndcg_at_k(ranked, qrels[qid], 5),
            "ndcg_cut_10": ndcg_at_k(ranked, qrels[qid], 10),
        }
    return report


def mean_report(tag: str, success_1: float, ndcg_cut_5: float, ndcg_cut_10: float) -> MetricReport:
    """A report carrying given mean values (single synthetic query); used to
    render comparison tables from already-computed numbers."""
    report = MetricReport(tag=tag)
    report.per_query["_mean"] = {
        "success_1": success_1,
        "ndcg_cut_5": ndcg_cut_5,
        "ndcg_cut_10": ndcg_cut_10,
    }
    return report


def compare_runs(reports: dict[str, MetricReport]) -> str:
    """Fixed 4-decimal comparison table, one row per run."""
    if not reports:
        raise InputError("need at least one report")
    name_width = max(len("run"), max(len(name) for name in reports))
    header = f"{'run':<{name_width}}  success_1  ndcg_cut_5  ndcg_cut_10"
    rows = [header]
    for name, report in reports.items():
        means = report.means
        cells = "  ".join(f"{means[metric]:.4f}" for metric in METRICS)
        rows.append(f"{name:<{name_width}}  {cells}")
    return "\n".join(rows)
