"""Operator CLI: build indexes, train the quality filter, execute run
presets, evaluate against qrels, compare runs, and inspect traces.

Exit codes: 0 success, 1 usage/input error, 2 provider failure.
Flags can also be given in a JSON config file (--config); explicit flags
win, and the env vars GRG_ANSWER_URL / GRG_SUMMARY_URL / GRG_EMBED_URL
switch the matching provider to its HTTP kind.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import pipeline, treceval
from .corpus import CorpusStore, load_corpus, load_labeled, load_topics
from .embeddings import EmbeddingConfig, make_embedder
from .errors import InputError, ProviderError
from .genai import (
    ChatMessage,
    GenAiConfig,
    ScriptedMockChat,
    Tracer,
    estimate_request_tokens,
    make_chat_provider,
)
from .index import IndexConfig, build_index, load_index, save_index
from .quality import load_model, save_model, train_quality_filter

log = logging.getLogger(__name__)


class _UsageError(InputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        raise _UsageError(message)


def _dump_json(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        config = json.loads(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise InputError(f"{path}: malformed config: {exc}") from exc
    if not isinstance(config, dict):
        raise InputError(f"{path}: config must be a JSON object")
    return config


def _resolve(args: argparse.Namespace, config: dict, key: str, default=None):
    """Explicit flag beats config file beats default. Config keys mirror
    flag names with dashes as underscores."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def build_parser() -> _Parser:
    parser = _Parser(prog="grg", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build and persist a BM25 index over a JSONL corpus")
    p_index.add_argument("--corpus", help="corpus JSONL path")
    p_index.add_argument("--out", help="output index file")
    p_index.add_argument("--k1", type=float, help="BM25 term-frequency saturation (default 0.9)")
    p_index.add_argument("--b", type=float, help="BM25 length normalization (default 0.4)")
    p_index.add_argument("--config", help="JSON config file; keys mirror flags")

    p_train = sub.add_parser("train-filter", help="train the passage quality classifier")
    p_train.add_argument("--data", help="labeled JSONL (text + reliable/unreliable/junk label)")
    p_train.add_argument("--out", help="output model JSON")
    p_train.add_argument("--max-features", type=int, dest="max_features", help="TF-IDF vocabulary cap (default 5000)")
    p_train.add_argument("--config", help="JSON config file; keys mirror flags")

    p_run = sub.add_parser("run", help="execute a preset over a topics file")
    p_run.add_argument("--preset", choices=sorted(pipeline.PRESETS), help="run preset")
    p_run.add_argument("--topics", help="topics JSON path")
    p_run.add_argument("--index", help="index file from `grg index`")
    p_run.add_argument("--corpus", help="corpus JSONL (defaults to the path recorded in the index)")
    p_run.add_argument("--filter-model", dest="filter_model", help="quality filter model JSON (run1/run2)")
    p_run.add_argument("--script", help="mock script JSON for scripted providers")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--parallel", type=int, help="concurrent topics (default 1)")
    p_run.add_argument("--config", help="JSON config file; keys mirror flags")

    p_eval = sub.add_parser("eval", help="score a TREC run file against qrels")
    p_eval.add_argument("--run", help="TREC run file")
    p_eval.add_argument("--qrels", help="qrels file: qid 0 docid grade")
    p_eval.add_argument("--out", help="write the metric report JSON here")
    p_eval.add_argument("--config", help="JSON config file; keys mirror flags")

    p_cmp = sub.add_parser("compare", help="tabulate metric reports side by side")
    p_cmp.add_argument("--reports", nargs="+", help="metric report JSON files")
    p_cmp.add_argument("--config", help="JSON config file; keys mirror flags")

    p_trace = sub.add_parser("trace", help="summarize a trace log and check its invariants")
    p_trace.add_argument("--file", help="trace.jsonl from a run")
    p_trace.add_argument("--topics", help="topics JSON; enables the summarizer blindness check")
    p_trace.add_argument("--config", help="JSON config file; keys mirror flags")

    return parser


def _require(value, flag: str):
    if value is None:
        raise _UsageError(f"missing required option {flag}")
    return value


def cmd_index(args) -> int:
    config = _load_config(args.config)
    corpus_path = _require(_resolve(args, config, "corpus"), "--corpus")
    out = _require(_resolve(args, config, "out"), "--out")
    cfg = IndexConfig(
        k1=float(_resolve(args, config, "k1", 0.9)),
        b=float(_resolve(args, config, "b", 0.4)),
    )
    passages = load_corpus(corpus_path)
    index = build_index(passages, cfg)
    save_index(index, out, corpus_path=str(corpus_path))
    print(
        f"docs={index.doc_count} vocab={len(index.postings)} "
        f"avgdl={index.avg_doc_length:.4f}"
    )
    return 0


def cmd_train_filter(args) -> int:
    config = _load_config(args.config)
    data = _require(_resolve(args, config, "data"), "--data")
    out = _require(_resolve(args, config, "out"), "--out")
    max_features = int(_resolve(args, config, "max_features", 5000))
    docs = load_labeled(data)
    model, vectorizer = train_quality_filter(docs, max_features=max_features)
    save_model(model, vectorizer, out)
    print(
        f"trained on {len(docs)} docs vocab={vectorizer.n_features} "
        f"epochs={model.trained_epochs} final_loss={model.loss_history[-1]:.6f}"
    )
    return 0


def _provider_configs(config: dict) -> tuple[GenAiConfig, GenAiConfig, EmbeddingConfig]:
    answer_url = os.environ.get("GRG_ANSWER_URL") or config.get("answer_endpoint_url")
    summary_url = os.environ.get("GRG_SUMMARY_URL") or config.get("summary_endpoint_url")
    embed_url = os.environ.get("GRG_EMBED_URL") or config.get("embed_endpoint_url")
    answer_cfg = GenAiConfig(
        kind="http_chat" if answer_url else config.get("answer_kind", "scripted_mock"),
        endpoint_url=answer_url,
        context_budget_tokens=int(config.get("context_budget_tokens", 2048)),
        low_temperature=float(config.get("low_temperature", 0.1)),
    )
    summary_cfg = GenAiConfig(
        kind="http_chat" if summary_url else config.get("summary_kind", "scripted_mock"),
        endpoint_url=summary_url,
        context_budget_tokens=int(config.get("context_budget_tokens", 2048)),
        low_temperature=float(config.get("low_temperature", 0.1)),
    )
    embed_cfg = EmbeddingConfig(
        kind="http" if embed_url else config.get("embed_kind", "hashed_lexical"),
        endpoint_url=embed_url,
        dimension=int(config.get("embed_dimension", 384)),
        seed=int(config.get("embed_seed", 1)),
    )
    return answer_cfg, summary_cfg, embed_cfg


def cmd_run(args) -> int:
    config = _load_config(args.config)
    preset = _require(_resolve(args, config, "preset"), "--preset")
    topics_path = _require(_resolve(args, config, "topics"), "--topics")
    index_path = _require(_resolve(args, config, "index"), "--index")
    out_dir = Path(_require(_resolve(args, config, "out"), "--out"))
    filter_model_path = _resolve(args, config, "filter_model")
    script_path = _resolve(args, config, "script")
    parallel = int(_resolve(args, config, "parallel", 1))

    run_cfg = pipeline.preset_config(preset)
    if run_cfg.use_quality_filter and not filter_model_path:
        raise InputError("preset requires quality filter (--filter-model)")
    if not run_cfg.use_quality_filter and filter_model_path:
        raise InputError(f"preset {preset!r} does not use a quality filter")

    index, recorded_corpus = load_index(index_path)
    corpus_path = _resolve(args, config, "corpus", recorded_corpus)
    if not corpus_path:
        raise InputError("no corpus path: pass --corpus or rebuild the index with one")
    store = CorpusStore(load_corpus(corpus_path))
    topics = load_topics(topics_path)
    filter_model = load_model(filter_model_path) if filter_model_path else None

    answer_cfg, summary_cfg, embed_cfg = _provider_configs(config)
    script = None
    if answer_cfg.kind == "scripted_mock" or summary_cfg.kind == "scripted_mock":
        if not script_path:
            raise InputError("scripted mock providers need --script")
        script = ScriptedMockChat.from_file(script_path).script
    providers = pipeline.Providers(
        answerer=make_chat_provider(answer_cfg, script),
        answer_cfg=answer_cfg,
        summarizer=make_chat_provider(summary_cfg, script),
        summary_cfg=summary_cfg,
        embedder=make_embedder(embed_cfg),
    )

    tracer = Tracer()
    results = pipeline.run_topics(
        topics, run_cfg, providers, index, store,
        filter_model=filter_model, parallel=parallel, tracer=tracer,
    )
    if not results:
        raise InputError("run produced no results")

    out_dir.mkdir(parents=True, exist_ok=True)
    treceval.emit_run_file(results, run_cfg.run_tag, out_dir / "run.trec")
    with open(out_dir / "turns.jsonl", "w", encoding="utf-8") as fh:
        for result in results:
            fh.write(_dump_json(pipeline.turn_result_json(result, "trace.jsonl")) + "\n")
    with open(out_dir / "trace.jsonl", "w", encoding="utf-8") as fh:
        for event in tracer.events:
            fh.write(_dump_json(event) + "\n")
    resolved = {
        "preset": preset,
        "run_config": asdict(run_cfg),
        "topics": str(topics_path),
        "index": str(index_path),
        "corpus": str(corpus_path),
        "filter_model": str(filter_model_path) if filter_model_path else None,
        "script": str(script_path) if script_path else None,
        "parallel": parallel,
        "answer": asdict(answer_cfg),
        "summary": asdict(summary_cfg),
        "embedding": asdict(embed_cfg),
    }
    (out_dir / "config.resolved.json").write_text(
        json.dumps(resolved, ensure_ascii=False, sort_keys=True, indent=2) + "\n", "utf-8"
    )
    print(f"wrote {len(results)} turns to {out_dir} (tag {run_cfg.run_tag})")
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    run_path = _require(_resolve(args, config, "run"), "--run")
    qrels_path = _require(_resolve(args, config, "qrels"), "--qrels")
    out = _resolve(args, config, "out")
    run = treceval.load_run(run_path)
    qrels = treceval.load_qrels(qrels_path)
    report = treceval.evaluate_run(run, qrels, tag=treceval.run_tag(run_path))
    if report.skipped:
        print(
            f"warning: {len(report.skipped)} queries not in qrels, skipped: "
            f"{', '.join(report.skipped)}",
            file=sys.stderr,
        )
    if not report.per_query:
        print("warning: no overlapping queries; nothing evaluated", file=sys.stderr)
    print(treceval.compare_runs({report.tag: report}))
    if out:
        Path(out).write_text(
            json.dumps(report.to_json(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            "utf-8",
        )
    return 0


def cmd_compare(args) -> int:
    config = _load_config(args.config)
    report_paths = _require(_resolve(args, config, "reports"), "--reports")
    reports: dict[str, treceval.MetricReport] = {}
    for path in report_paths:
        try:
            payload = json.loads(Path(path).read_text("utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read report {path}: {exc}") from exc
        except ValueError as exc:
            raise InputError(f"{path}: malformed report: {exc}") from exc
        report = treceval.MetricReport.from_json(payload)
        reports[report.tag] = report
    print(treceval.compare_runs(reports))
    return 0


def cmd_trace(args) -> int:
    config = _load_config(args.config)
    trace_path = _require(_resolve(args, config, "file"), "--file")
    topics_path = _resolve(args, config, "topics")
    try:
        lines = Path(trace_path).read_text("utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read trace {trace_path}: {exc}") from exc
    events = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            events.append(json.loads(line))
        except ValueError as exc:
            raise InputError(f"{trace_path}: line {lineno}: malformed event: {exc}") from exc

    chats = [e for e in events if e.get("type") == "chat"]
    answers = [e for e in chats if e.get("role") == "answer"]
    summaries = [e for e in chats if e.get("role") == "summary"]
    degraded = [e for e in events if e.get("type") == "degraded"]
    errors = [e for e in events if e.get("type") == "turn_error"]
    print(
        f"events={len(events)} answers={len(answers)} summaries={len(summaries)} "
        f"degraded={len(degraded)} turn_errors={len(errors)}"
    )

    violations = []
    for e in chats:
        messages = [ChatMessage(m["role"], m["content"]) for m in e["messages"]]
        if estimate_request_tokens(messages) > e["budget"]:
            violations.append(f"chat event key={e.get('key')!r} exceeds its token budget")
    if topics_path:
        utterances = [
            turn.utterance
            for topic in load_topics(topics_path)
            for turn in topic.turns
        ]
        for e in summaries:
            for utterance in utterances:
                if any(utterance in m["content"] for m in e["messages"]):
                    violations.append(
                        f"summary event key={e.get('key')!r} leaks the utterance {utterance!r}"
                    )
    for violation in violations:
        print(f"violation: {violation}", file=sys.stderr)
    if violations:
        return 1
    print("trace ok")
    return 0


_COMMANDS = {
    "index": cmd_index,
    "train-filter": cmd_train_filter,
    "run": cmd_run,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "trace": cmd_trace,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
