"""Per-turn generate-retrieve-generate orchestration.

Each turn: rank the personal statements, fold the relevant ones into a
fluent prompt, generate an initial answer, then loop: retrieve with BM25
using the generated text as the query, optionally filter passage quality,
optimize and summarize the top passages, and either stop (the combined
summaries become the final response) or ask the answerer to re-answer from
the summaries and retrieve again.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .corpus import CorpusStore, Passage, Topic, Turn
from .embeddings import rank_by_similarity
from .errors import GrgError, InputError
from .genai import (
    ChatMessage,
    GenAiConfig,
    Tracer,
    build_initial_prompt,
    generate_answer,
    summarize_passage,
)
from .index import InvertedIndex, SearchHit, search
from .quality import LogisticModel, TfidfVectorizer, filter_reliable
from .sentences import sentence_spans

log = logging.getLogger(__name__)

SHOT_PROMPT_TEMPLATE = (
    "Answer the question using this information: {summaries} Question: {question}"
)


@dataclass(frozen=True)
class RunConfig:
    shots: int = 1
    use_quality_filter: bool = False
    ptkb_threshold: float = 0.3
    top_k_retrieve: int = 50
    top_n_passages: int = 5
    optimize_char_cap: int = 512
    final_char_cap: int = 1200
    run_tag: str = "run"
    rtg_baseline: bool = False

    def __post_init__(self):
        if self.shots < 1:
            raise InputError("shots must be >= 1")
        if not 1 <= self.top_n_passages <= self.top_k_retrieve:
            raise InputError("need 1 <= top_n_passages <= top_k_retrieve")
        if self.optimize_char_cap < 1 or self.final_char_cap < 1:
            raise InputError("character caps must be >= 1")
        if not -1.0 <= self.ptkb_threshold <= 1.0:
            raise InputError("ptkb_threshold must be in [-1, 1]")


PRESETS = {
    "run1": RunConfig(shots=2, use_quality_filter=True, run_tag="run1"),
    "run2": RunConfig(shots=1, use_quality_filter=True, run_tag="run2"),
    "run3": RunConfig(shots=1, use_quality_filter=False, run_tag="run3"),
    "rtg": RunConfig(shots=1, use_quality_filter=False, rtg_baseline=True, run_tag="rtg-baseline"),
}


def preset_config(name: str) -> RunConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise InputError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass
class ShotRecord:
    shot_index: int
    generated_answer: str  # the text used as this shot's search query
    retrieved: list[SearchHit]
    kept_after_filter: list[str]
    optimized_texts: dict[str, str]
    summaries: dict[str, str]
    combined_summary: str


@dataclass
class TurnResult:
    topic_id: str
    turn_id: int
    selected_ptkbs: list[tuple[str, float]]
    shots: list[ShotRecord]
    final_response: str
    provenance: list[SearchHit]


@dataclass
class Providers:
    """The three provider roles a run needs."""

    answerer: object
    answer_cfg: GenAiConfig
    summarizer: object
    summary_cfg: GenAiConfig
    embedder: object


def select_ptkbs(
    embedder, topic: Topic, utterance: str, threshold: float
) -> list[tuple[str, float]]:
    """Personal statements scoring >= threshold, best first."""
    if not topic.ptkbs:
        return []
    ranked = rank_by_similarity(embedder, utterance, [p.statement for p in topic.ptkbs])
    return [
        (topic.ptkbs[i].ptkb_id, score)
        for i, score in ranked
        if score >= threshold
    ]


def assemble_fresh_history(topic: Topic, current_turn: int) -> list[ChatMessage]:
    """Alternating user/assistant messages for every turn before the current
    one, rebuilt from the canonical responses."""
    history: list[ChatMessage] = []
    for turn in topic.turns:
        if turn.turn_id >= current_turn:
            break
        if turn.canonical_response is None:
            raise InputError(
                f"topic {topic.topic_id}: turn {turn.turn_id} lacks a canonical "
                f"response; cannot assemble fresh-start history"
            )
        history.append(ChatMessage("user", turn.utterance))
        history.append(ChatMessage("assistant", turn.canonical_response))
    return history


def optimize_passage(embedder, passage: Passage, utterance: str, char_cap: int) -> str:
    """Reorder sentences by relevance to the utterance, join with single
    spaces, and keep the leading char_cap characters (a trailing partial
    sentence stays, truncated)."""
    if char_cap < 1:
        raise InputError("char_cap must be >= 1")
    sentences = list(passage.sentences)
    ranked = rank_by_similarity(embedder, utterance, sentences)
    joined = " ".join(sentences[i] for i, _ in ranked)
    if len(joined) <= char_cap:
        return joined
    return joined[:char_cap].rstrip()


def fluent_cutoff(text: str, final_char_cap: int) -> str:
    """Truncate to the last sentence boundary at or before the cap; if no
    boundary fits, hard-cut at the cap."""
    if not text:
        raise InputError("text must be non-empty")
    if len(text) <= final_char_cap:
        return text
    ends = [b for _, b in sentence_spans(text) if b <= final_char_cap]
    if ends:
        return text[: max(ends)]
    return text[:final_char_cap].rstrip()


def _answer_key(topic: Topic, turn: Turn, shot: int) -> str:
    return f"{topic.topic_id}/{turn.turn_id}/{shot}/answer"


def _summary_key(topic: Topic, turn: Turn, shot: int, passage_id: str) -> str:
    return f"{topic.topic_id}/{turn.turn_id}/{shot}/summary:{passage_id}"


def run_turn(
    topic: Topic,
    turn: Turn,
    cfg: RunConfig,
    providers: Providers,
    index: InvertedIndex,
    store: CorpusStore,
    filter_model: tuple[LogisticModel, TfidfVectorizer] | None = None,
    tracer: Tracer | None = None,
) -> TurnResult:
    """Run the full per-turn loop and return the structured result."""
    if cfg.use_quality_filter and filter_model is None:
        raise InputError("quality filter enabled but no filter model provided")
    if filter_model is not None and not cfg.use_quality_filter:
        raise InputError("filter model provided but the preset does not use it")

    utterance = turn.utterance
    selected = select_ptkbs(providers.embedder, topic, utterance, cfg.ptkb_threshold)
    statements = {p.ptkb_id: p.statement for p in topic.ptkbs}
    initial_prompt = build_initial_prompt([statements[pid] for pid, _ in selected], utterance)

    history: list[ChatMessage] | None = None

    def fresh_history() -> list[ChatMessage]:
        nonlocal history
        if history is None:
            history = assemble_fresh_history(topic, turn.turn_id)
        return history

    if cfg.rtg_baseline:
        query = turn.resolved_utterance or initial_prompt
    else:
        query = generate_answer(
            providers.answerer,
            providers.answer_cfg,
            fresh_history(),
            initial_prompt,
            key=_answer_key(topic, turn, 1),
            tracer=tracer,
        )

    shots: list[ShotRecord] = []
    last_kept: list[tuple[Passage, SearchHit]] = []
    for shot in range(1, cfg.shots + 1):
        hits = search(index, query, cfg.top_k_retrieve)
        pairs = [(store[h.passage_id], h) for h in hits]
        if cfg.use_quality_filter:
            model, vectorizer = filter_model
            kept = filter_reliable(model, vectorizer, pairs)
        else:
            kept = pairs
        top = kept[: cfg.top_n_passages]
        optimized = {
            p.id: optimize_passage(providers.embedder, p, utterance, cfg.optimize_char_cap)
            for p, _ in top
        }
        summaries = {
            p.id: summarize_passage(
                providers.summarizer,
                providers.summary_cfg,
                optimized[p.id],
                key=_summary_key(topic, turn, shot, p.id),
                tracer=tracer,
            )
            for p, _ in top
        }
        combined = "\n\n".join(summaries[p.id] for p, _ in top)
        shots.append(
            ShotRecord(
                shot_index=shot,
                generated_answer=query,
                retrieved=hits,
                kept_after_filter=[p.id for p, _ in kept],
                optimized_texts=optimized,
                summaries=summaries,
                combined_summary=combined,
            )
        )
        last_kept = kept
        if shot < cfg.shots:
            prompt = SHOT_PROMPT_TEMPLATE.format(summaries=combined, question=initial_prompt)
            query = generate_answer(
                providers.answerer,
                providers.answer_cfg,
                fresh_history(),
                prompt,
                key=_answer_key(topic, turn, shot + 1),
                tracer=tracer,
            )

    final_source = shots[-1].combined_summary
    if not final_source:
        # Nothing retrieved (or nothing survived the filter) on the final
        # shot: fall back to the last generated answer, loudly.
        final_source = shots[-1].generated_answer
        log.warning(
            "topic %s turn %s: no passages retained on final shot; "
            "falling back to the generated answer",
            topic.topic_id,
            turn.turn_id,
        )
        if tracer is not None:
            tracer.record(
                "degraded",
                topic_id=topic.topic_id,
                turn_id=turn.turn_id,
                degraded=True,
                reason="no passages retained on final shot",
            )

    provenance = [
        SearchHit(passage_id=p.id, score=hit.score, rank=i + 1)
        for i, (p, hit) in enumerate(last_kept)
    ]
    return TurnResult(
        topic_id=topic.topic_id,
        turn_id=turn.turn_id,
        selected_ptkbs=selected,
        shots=shots,
        final_response=fluent_cutoff(final_source, cfg.final_char_cap),
        provenance=provenance,
    )


def _run_one_topic(topic, cfg, providers, index, store, filter_model):
    tracer = Tracer()
    results: list[TurnResult] = []
    for turn in topic.turns:
        try:
            results.append(
                run_turn(topic, turn, cfg, providers, index, store, filter_model, tracer)
            )
        except GrgError as exc:
            log.warning(
                "topic %s turn %s failed (%s); skipping remaining turns of this topic",
                topic.topic_id,
                turn.turn_id,
                exc,
            )
            tracer.record(
                "turn_error", topic_id=topic.topic_id, turn_id=turn.turn_id, error=str(exc)
            )
            break
    return results, tracer


def run_topics(
    topics: list[Topic],
    cfg: RunConfig,
    providers: Providers,
    index: InvertedIndex,
    store: CorpusStore,
    filter_model: tuple[LogisticModel, TfidfVectorizer] | None = None,
    parallel: int = 1,
    tracer: Tracer | None = None,
) -> list[TurnResult]:
    """Run every topic; turns within a topic are sequential, topics may run
    concurrently. Results and trace events keep canonical (topic, turn)
    order regardless of parallelism. A failed turn skips the rest of its
    topic only."""
    if parallel <= 1:
        outcomes = [
            _run_one_topic(t, cfg, providers, index, store, filter_model) for t in topics
        ]
    else:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            outcomes = list(
                pool.map(
                    lambda t: _run_one_topic(t, cfg, providers, index, store, filter_model),
                    topics,
                )
            )
    results: list[TurnResult] = []
    for topic_results, topic_tracer in outcomes:
        results.extend(topic_results)
        if tracer is not None:
            tracer.extend(topic_tracer)
    return results


def turn_result_json(result: TurnResult, trace_path: str) -> dict:
    """The documented per-turn output object."""
    return {
        "topic_id": result.topic_id,
        "turn_id": result.turn_id,
        "ptkb_provenance": [pid for pid, _ in result.selected_ptkbs],
        "response": result.final_response,
        "passage_provenance": [
            {"id": h.passage_id, "score": h.score, "rank": h.rank} for h in result.provenance
        ],
        "trace_path": trace_path,
    }
