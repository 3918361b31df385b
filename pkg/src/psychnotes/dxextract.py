"""Few-shot prompt construction for diagnosis extraction, the ``DX @@ ... ##``
answer parser, and rule-based mapping of diagnosis text to F41/F43."""
from __future__ import annotations

import enum
import json
import logging
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Protocol

from .preprocess import normalize

log = logging.getLogger(__name__)

CHARS_PER_TOKEN = 4
DEFAULT_CONTEXT_TOKENS = 32000
OPEN, CLOSE, TAG = "@@", "##", "DX"


class DxError(Exception):
    pass


class ContextBudgetError(DxError):
    def __init__(self, estimated: int, budget: int):
        super().__init__(f"prompt needs ~{estimated} tokens, budget is {budget}")
        self.estimated = estimated
        self.budget = budget


class MalformedAnnotationError(DxError):
    def __init__(self, message: str, offset: int, raw: str = ""):
        super().__init__(f"{message} at byte {offset}")
        self.reason = message
        self.offset = offset
        self.raw = raw


class TransportError(DxError):
    pass


class TransientTransportError(TransportError):
    """Failure worth retrying (timeouts, rate limits)."""


class DiagnosisClass(enum.Enum):
    F41_ANXIETY = "F41"
    F43_ADJUSTMENT = "F43"
    OTHER = "Other"


@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant
    content: str


@dataclass(frozen=True)
class PromptSequence:
    note_id: str
    messages: tuple

    def estimated_tokens(self) -> int:
        return sum(estimate_tokens(m.content) for m in self.messages)

    def to_json(self) -> dict:
        return {"note_id": self.note_id,
                "messages": [{"role": m.role, "content": m.content} for m in self.messages]}


@dataclass(frozen=True)
class DxAnnotation:
    raw_spans: tuple
    note_id: str = ""
    retries: int = 0

    def to_json(self) -> dict:
        return {"note_id": self.note_id, "spans": list(self.raw_spans)}


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / CHARS_PER_TOKEN)


@dataclass(frozen=True)
class PromptDefaults:
    role: str
    task: str
    example_note: str
    example_answer: str
    language: str = "en"


def load_prompt_defaults(path=None) -> PromptDefaults:
    if path is None:
        text = resources.files("psychnotes").joinpath("data", "prompt_en.json").read_text(
            encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    obj = json.loads(text)
    return PromptDefaults(obj["role"], obj["task"], obj["example_note"], obj["example_answer"],
                          obj.get("language", "en"))


def build_prompt(example_note: str, example_answer: str, query_note: str,
                 role_text: Optional[str] = None, task_text: Optional[str] = None,
                 note_id: str = "", budget: int = DEFAULT_CONTEXT_TOKENS) -> PromptSequence:
    """Role, task, worked example (note and answer), then the query note."""
    if role_text is None or task_text is None:
        defaults = load_prompt_defaults()
        role_text = defaults.role if role_text is None else role_text
        task_text = defaults.task if task_text is None else task_text
    parts = {"role_text": role_text, "task_text": task_text, "example_note": example_note,
             "example_answer": example_answer, "query_note": query_note}
    for name, value in parts.items():
        if not value or not value.strip():
            raise ValueError(f"{name} must be non-empty")
    prompt = PromptSequence(note_id, (
        Message("system", role_text),
        Message("user", task_text),
        Message("user", example_note),
        Message("assistant", example_answer),
        Message("user", query_note),
    ))
    est = prompt.estimated_tokens()
    if est > budget:
        raise ContextBudgetError(est, budget)
    return prompt


def format_dx_answer(spans) -> str:
    return " ".join(f"{TAG} {OPEN} {s} {CLOSE}" for s in spans)


def _byte_offset(text: str, i: int) -> int:
    return len(text[:i].encode("utf-8"))


def _preceded_by_tag(text: str, i: int) -> bool:
    head = text[:i].rstrip()
    if not head.endswith(TAG):
        return False
    start = len(head) - len(TAG)
    return start == 0 or not head[start - 1].isalnum()


def parse_dx_response(text: str, note_id: str = "") -> DxAnnotation:
    """Trimmed contents of every ``DX @@ ... ##`` span, in order.

    Any ``@@`` left unclosed raises MalformedAnnotationError; ``@@ ... ##``
    pairs not introduced by ``DX`` and empty spans are skipped.
    """
    spans = []
    pos = 0
    while True:
        i = text.find(OPEN, pos)
        if i < 0:
            break
        j = text.find(CLOSE, i + len(OPEN))
        if j < 0:
            raise MalformedAnnotationError("'@@' without a closing '##'", _byte_offset(text, i),
                                           text)
        inner = text[i + len(OPEN):j]
        nested = inner.find(OPEN)
        if nested >= 0:
            raise MalformedAnnotationError("'@@' without a closing '##'", _byte_offset(text, i),
                                           text)
        span = inner.strip()
        if span and _preceded_by_tag(text, i):
            spans.append(span)
        pos = j + len(CLOSE)
    return DxAnnotation(tuple(spans), note_id)


@dataclass(frozen=True)
class DxRule:
    pattern: str
    cls: DiagnosisClass


def parse_rules(obj) -> tuple:
    rules = []
    for n, entry in enumerate(obj):
        try:
            pattern = normalize(entry["pattern"])
            cls = DiagnosisClass(entry["class"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"rule {n}: {exc}") from exc
        if not pattern:
            raise ValueError(f"rule {n}: empty pattern")
        rules.append(DxRule(pattern, cls))
    return tuple(rules)


def load_rules(path=None) -> tuple:
    if path is None:
        text = resources.files("psychnotes").joinpath("data", "dx_rules.json").read_text(
            encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_rules(json.loads(text))


_DEFAULT_RULES: Optional[tuple] = None


def normalize_diagnosis(span: str, rules: Optional[tuple] = None) -> DiagnosisClass:
    """First rule (in table order) whose pattern occurs as whole words in the span."""
    global _DEFAULT_RULES
    if rules is None:
        if _DEFAULT_RULES is None:
            _DEFAULT_RULES = load_rules()
        rules = _DEFAULT_RULES
    text = f" {normalize(span)} "
    for rule in rules:
        if f" {rule.pattern} " in text:
            return rule.cls
    return DiagnosisClass.OTHER


class Transport(Protocol):
    def send(self, prompt: PromptSequence) -> str: ...


@dataclass
class StubTransport:
    """Offline transport answering from canned responses keyed by note id."""

    responses: dict
    calls: list = field(default_factory=list)

    @classmethod
    def from_file(cls, path) -> "StubTransport":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(obj, dict):
            raise ValueError("stub fixture must map note id to response text")
        return cls({str(k): str(v) for k, v in obj.items()})

    def send(self, prompt: PromptSequence) -> str:
        self.calls.append(prompt.note_id)
        if prompt.note_id not in self.responses:
            raise TransportError(f"stub has no response for note {prompt.note_id!r}")
        return self.responses[prompt.note_id]


def extract_with_transport(transport: Transport, prompt: PromptSequence, max_retries: int = 3,
                           backoff: float = 0.5, sleep: Callable[[float], None] = time.sleep
                           ) -> DxAnnotation:
    """Send the prompt and parse the reply, retrying transient failures.

    Waits ``backoff * 2**attempt`` seconds between attempts.
    """
    attempt = 0
    while True:
        try:
            reply = transport.send(prompt)
            break
        except TransientTransportError as exc:
            if attempt >= max_retries:
                raise TransportError(f"giving up after {attempt} retries: {exc}") from exc
            delay = backoff * (2 ** attempt)
            attempt += 1
            log.warning("transient transport failure for %s (retry %d in %.2fs): %s",
                        prompt.note_id, attempt, delay, exc)
            sleep(delay)
    ann = parse_dx_response(reply, prompt.note_id)
    return DxAnnotation(ann.raw_spans, ann.note_id, attempt)
