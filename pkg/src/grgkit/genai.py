"""Chat-generation provider contracts, prompt construction, context budgeting.

Two provider roles exist: the answerer (initial and iterative answers) and
the summarizer (blind 1-2 sentence passage summaries). Both speak the same
protocol, so either can be the scripted mock (deterministic, keyed by
"topic/turn/shot/role") or an HTTP chat server.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import requests

from .errors import InputError, ProviderError

ROLES = ("system", "user", "assistant")

ANSWER_MAX_TOKENS = 512
SUMMARY_MAX_TOKENS = 128
SUMMARY_INSTRUCTION = "Summarize the given passage in 1-2 sentences."
SUMMARY_INPUT_CHAR_CAP = 512


class BudgetError(InputError):
    pass


class GenerationError(ProviderError):
    pass


class MockScriptError(ProviderError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise InputError(f"unknown chat role {self.role!r}")
        if not self.content:
            raise InputError("chat message content must be non-empty")


@dataclass(frozen=True)
class GenerationRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float
    max_tokens: int

    def __post_init__(self):
        if self.temperature < 0:
            raise InputError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise InputError("max_tokens must be >= 1")


@dataclass(frozen=True)
class GenAiConfig:
    kind: str = "scripted_mock"  # or "http_chat"
    endpoint_url: str | None = None
    context_budget_tokens: int = 2048
    low_temperature: float = 0.1
    answer_temperature: float = 0.7
    timeout: float = 60.0
    max_in_flight: int = 4

    def __post_init__(self):
        if self.kind not in ("scripted_mock", "http_chat"):
            raise InputError(f"unknown chat provider kind {self.kind!r}")
        if self.kind == "http_chat" and not self.endpoint_url:
            raise InputError("http_chat provider requires endpoint_url")


def estimate_tokens(text: str) -> int:
    """ceil(1.3 * whitespace token count), computed in exact integer math."""
    n = len(text.split())
    return (13 * n + 9) // 10


def estimate_request_tokens(messages: list[ChatMessage] | tuple[ChatMessage, ...]) -> int:
    return sum(estimate_tokens(m.content) for m in messages)


def enforce_budget(
    messages: list[ChatMessage], budget: int
) -> list[ChatMessage]:
    """Drop oldest non-system messages whole until the estimate fits.

    System messages and the final non-system message are always retained;
    if those alone exceed the budget the prompt cannot be sent at all.
    """
    keep = list(range(len(messages)))
    droppable = [i for i, m in enumerate(messages) if m.role != "system"]
    if not droppable:
        raise BudgetError("no user message to send")
    final = droppable.pop()  # last non-system message stays
    if estimate_tokens(messages[final].content) > budget:
        raise BudgetError("prompt too large")
    floor = [i for i in keep if i not in droppable]
    if estimate_request_tokens([messages[i] for i in floor]) > budget:
        raise BudgetError("prompt too large")

    dropped: set[int] = set()
    while droppable and estimate_request_tokens(
        [messages[i] for i in keep if i not in dropped]
    ) > budget:
        dropped.add(droppable.pop(0))
    return [m for i, m in enumerate(messages) if i not in dropped]


class Tracer:
    """Append-only structured log of provider calls; appends are serialized."""

    def __init__(self):
        self.events: list[dict] = []
        self._lock = threading.Lock()

    def record(self, event_type: str, **fields) -> None:
        event = {"type": event_type, **fields}
        with self._lock:
            self.events.append(event)

    def extend(self, other: "Tracer") -> None:
        with self._lock:
            self.events.extend(other.events)


def script_from_trace(events: list[dict]) -> dict[str, str]:
    """Rebuild a mock script from a trace: replaying it through the
    scripted mock reproduces the original run."""
    return {e["key"]: e["response"] for e in events if e.get("type") == "chat" and e.get("key")}


class ScriptedMockChat:
    """Deterministic provider: responses looked up by script key."""

    def __init__(self, script: dict[str, str]):
        self.script = dict(script)

    @classmethod
    def from_file(cls, path) -> "ScriptedMockChat":
        import json
        from pathlib import Path

        try:
            script = json.loads(Path(path).read_text("utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read mock script {path}: {exc}") from exc
        except ValueError as exc:
            raise InputError(f"{path}: malformed mock script: {exc}") from exc
        if not isinstance(script, dict):
            raise InputError(f"{path}: mock script must be a JSON object")
        return cls(script)

    def generate(self, request: GenerationRequest, key: str | None = None) -> str:
        if key is None or key not in self.script:
            raise MockScriptError(f"no scripted response for key {key!r}")
        return self.script[key]


class HttpChat:
    """POST {"messages": [...], "temperature": t, "max_tokens": m} -> {"text": ...}."""

    def __init__(self, cfg: GenAiConfig):
        self.cfg = cfg
        self._slots = threading.Semaphore(cfg.max_in_flight)

    def generate(self, request: GenerationRequest, key: str | None = None) -> str:
        body = {
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        with self._slots:
            try:
                resp = requests.post(self.cfg.endpoint_url, json=body, timeout=self.cfg.timeout)
            except requests.RequestException as exc:
                raise GenerationError(f"chat request failed: {exc}") from exc
        if resp.status_code != 200:
            raise GenerationError(f"chat server returned {resp.status_code}")
        try:
            return resp.json()["text"]
        except (ValueError, KeyError) as exc:
            raise GenerationError(f"malformed chat response: {exc}") from exc


def make_chat_provider(cfg: GenAiConfig, script: dict[str, str] | None = None):
    if cfg.kind == "http_chat":
        return HttpChat(cfg)
    return ScriptedMockChat(script or {})


def _record_chat(tracer, role, key, cfg, request, response):
    if tracer is None:
        return
    tracer.record(
        "chat",
        role=role,
        key=key,
        messages=[{"role": m.role, "content": m.content} for m in request.messages],
        temperature=request.temperature,
        max_tokens=request.max_tokens,
        budget=cfg.context_budget_tokens,
        response=response,
    )


def generate_answer(
    provider,
    cfg: GenAiConfig,
    history: list[ChatMessage],
    prompt: str,
    *,
    key: str | None = None,
    tracer: Tracer | None = None,
) -> str:
    """Generate an answer to ``prompt`` given the conversation history."""
    if not prompt:
        raise InputError("prompt must be non-empty")
    messages = enforce_budget(
        list(history) + [ChatMessage("user", prompt)], cfg.context_budget_tokens
    )
    request = GenerationRequest(tuple(messages), cfg.answer_temperature, ANSWER_MAX_TOKENS)
    text = provider.generate(request, key)
    if not text:
        raise GenerationError("empty generation")
    _record_chat(tracer, "answer", key, cfg, request, text)
    return text


def summarize_passage(
    provider,
    cfg: GenAiConfig,
    passage_text: str,
    *,
    key: str | None = None,
    tracer: Tracer | None = None,
) -> str:
    """Blind summarization: the request carries only the instruction and the
    passage, never the user utterance, at the configured low temperature."""
    if len(passage_text) > SUMMARY_INPUT_CHAR_CAP:
        raise InputError(
            f"passage exceeds {SUMMARY_INPUT_CHAR_CAP} characters ({len(passage_text)})"
        )
    if not passage_text:
        raise InputError("passage text must be non-empty")
    prompt = f"{SUMMARY_INSTRUCTION}\n\n{passage_text}"
    messages = enforce_budget([ChatMessage("user", prompt)], cfg.context_budget_tokens)
    request = GenerationRequest(tuple(messages), cfg.low_temperature, SUMMARY_MAX_TOKENS)
    text = provider.generate(request, key)
    if not text:
        raise GenerationError("empty generation")
    _record_chat(tracer, "summary", key, cfg, request, text)
    return text


_SUBJECT_PREFIXES = ("I am ", "I'm ", "I ")


def _statement_fragment(statement: str, first: bool) -> str:
    s = statement.strip().rstrip(".!?").strip()
    if first or not s:
        return s
    for prefix in _SUBJECT_PREFIXES:
        if s.startswith(prefix):
            return s[len(prefix):]
    return s[0].lower() + s[1:]


def build_initial_prompt(selected_ptkbs: list[str], utterance: str) -> str:
    """Fold the selected personal statements and the utterance into one
    fluent question.

    The first statement keeps its wording ("I am" stays uncontracted);
    later statements drop the repeated first-person subject and join with
    " and " after the first, ", and " after that:
    "I am vegetarian and lactose intolerant, and would like to lose weight.
    What is a good diet?"
    """
    if not utterance:
        raise InputError("utterance must be non-empty")
    fragments = [
        _statement_fragment(s, first=(i == 0))
        for i, s in enumerate(selected_ptkbs)
    ]
    fragments = [f for f in fragments if f]
    if not fragments:
        return utterance
    combined = fragments[0]
    for i, fragment in enumerate(fragments[1:]):
        combined += (" and " if i == 0 else ", and ") + fragment
    return f"{combined}. {utterance}"
