"""Stateless vision-language inference gateway.

Every call carries its full context in the prompt (persona preamble,
recent transcript window, customer facts) because the backend retains
nothing between requests. A deterministic mock backend gives end-to-end
tests a model-free path; the remote backend speaks a minimal HTTP contract
(POST JSON: prompt + optional base64 image, returns text).

Response validation is the hallucination guard: intent must be allowed for
the active role, length bounded, and any monetary amount in the reply must
appear verbatim in the session facts.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Protocol

import requests

from .protocol import EncodedFrame
from .roles import AgentRole, ServiceNeed

DEFAULT_MAX_RESPONSE_CHARS = 2000
DEFAULT_TIMEOUT_S = 10.0
DEFAULT_TRANSCRIPT_WINDOW = 6

MONEY_TOKEN_RE = re.compile(r"\$\d[\d,]*(?:\.\d+)?")


class InferenceError(Exception):
    pass


class BackendUnavailable(InferenceError):
    pass


class InferenceTimeout(InferenceError):
    pass


class OversizeResponse(InferenceError):
    pass


class TranslatorUnavailable(InferenceError):
    pass


@dataclass(frozen=True)
class InferenceRequest:
    """Single-image + text request; the model contract allows at most one image."""

    prompt_text: str
    request_id: str
    image: EncodedFrame | None = None

    def __post_init__(self) -> None:
        if not self.prompt_text:
            raise ValueError("prompt_text must be nonempty")
        if not self.request_id:
            raise ValueError("request_id must be nonempty")


@dataclass(frozen=True)
class InferenceResponse:
    text: str
    intent: ServiceNeed | None  # None = unknown
    backend: str  # "mock" | "remote"
    latency_ms: float


@dataclass(frozen=True)
class BackendResult:
    text: str
    intent: ServiceNeed | None
    latency_ms: float = 0.0


class InferenceBackend(Protocol):
    name: str

    def complete(self, request: InferenceRequest) -> BackendResult: ...


# ---------------------------------------------------------------------------
# Mock backend: keyword intent table + reply templates. The table below IS
# the behavioral contract the tests check against.

MOCK_INTENT_KEYWORDS: dict[ServiceNeed, tuple[str, ...]] = {
    ServiceNeed.TRANSACTION_REQUEST: (
        "transfer",
        "send money",
        "pay",
        "payment",
        "deposit",
        "withdraw",
        "wire",
    ),
    ServiceNeed.INFORMATION_LOOKUP: (
        "balance",
        "history",
        "statement",
        "rate",
        "price",
        "catalog",
        "hours",
        "how much",
    ),
}

MOCK_REPLY_TEMPLATES: dict[ServiceNeed, str] = {
    ServiceNeed.GENERAL_INQUIRY: "Hello! How can I help you today?",
    ServiceNeed.TRANSACTION_REQUEST: "I can help with that transaction. Let's review the details together.",
    ServiceNeed.INFORMATION_LOOKUP: "Here is the information you asked for.",
}


class MockBackend:
    """Deterministic stand-in model: a pure function of the request bytes.

    Intent comes from the first keyword group that matches the prompt.
    For lookups, the reply echoes a monetary amount found in the prompt's
    facts so the grounding check has something real to verify. With
    `hallucinate_amounts` set, the reply cites an amount that is not in the
    facts, for exercising the validation path.
    """

    name = "mock"

    def __init__(self, hallucinate_amounts: bool = False):
        self.hallucinate_amounts = hallucinate_amounts

    def classify_intent(self, prompt_text: str) -> ServiceNeed:
        # Classify the customer's latest turn, not the fact slots or older
        # transcript; structured prompts mark it with a "customer:" line.
        lowered = prompt_text.lower()
        marker = lowered.rfind("customer:")
        if marker != -1:
            lowered = lowered[marker:]
        for need in (ServiceNeed.TRANSACTION_REQUEST, ServiceNeed.INFORMATION_LOOKUP):
            if any(kw in lowered for kw in MOCK_INTENT_KEYWORDS[need]):
                return need
        return ServiceNeed.GENERAL_INQUIRY

    def complete(self, request: InferenceRequest) -> BackendResult:
        intent = self.classify_intent(request.prompt_text)
        text = MOCK_REPLY_TEMPLATES[intent]
        if intent is ServiceNeed.INFORMATION_LOOKUP:
            amounts = MONEY_TOKEN_RE.findall(request.prompt_text)
            if self.hallucinate_amounts:
                text = "Your balance is $999,999.99."
            elif amounts:
                text = f"Here is the information you asked for: {amounts[0]}."
        return BackendResult(text=text, intent=intent, latency_ms=0.0)


class RemoteBackend:
    """HTTP client for a remotely hosted vision-language model.

    Contract: POST {base_url}/infer with JSON {"prompt": str,
    "image_b64": str?}; the service answers {"text": str, "intent": str?}.
    """

    name = "remote"

    def __init__(self, base_url: str, timeout_s: float = DEFAULT_TIMEOUT_S):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self._session = requests.Session()

    def complete(self, request: InferenceRequest) -> BackendResult:
        import base64

        body: dict = {"prompt": request.prompt_text}
        if request.image is not None:
            body["image_b64"] = base64.b64encode(request.image.png_bytes).decode("ascii")
        started = time.monotonic()
        try:
            resp = self._session.post(
                f"{self.base_url}/infer", json=body, timeout=self.timeout_s
            )
        except requests.Timeout as exc:
            raise InferenceTimeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise BackendUnavailable(str(exc)) from exc
        latency_ms = (time.monotonic() - started) * 1000.0
        if resp.status_code != 200:
            raise BackendUnavailable(f"backend returned HTTP {resp.status_code}")
        try:
            data = resp.json()
            text = data["text"]
        except (ValueError, KeyError) as exc:
            raise BackendUnavailable(f"malformed backend response: {exc}") from exc
        intent: ServiceNeed | None = None
        raw_intent = data.get("intent")
        if isinstance(raw_intent, str):
            try:
                intent = ServiceNeed(raw_intent)
            except ValueError:
                intent = None
        return BackendResult(text=text, intent=intent, latency_ms=latency_ms)


def infer(
    request: InferenceRequest,
    backend: InferenceBackend,
    *,
    max_response_chars: int = DEFAULT_MAX_RESPONSE_CHARS,
) -> InferenceResponse:
    """One stateless model call.

    The backend is consulted once per attempt; an unavailable backend gets a
    single retry, then the error propagates (no retry storms).
    """
    try:
        result = backend.complete(request)
    except BackendUnavailable:
        result = backend.complete(request)  # single retry
    if len(result.text) > max_response_chars:
        raise OversizeResponse(f"{len(result.text)} chars > {max_response_chars}")
    return InferenceResponse(
        text=result.text,
        intent=result.intent,
        backend=backend.name,
        latency_ms=result.latency_ms,
    )


# ---------------------------------------------------------------------------
# Prompt construction


DEFAULT_PERSONA_PREAMBLES: dict[AgentRole, str] = {
    AgentRole.CUSTOMER_SERVICE: (
        "You are a friendly branch customer service agent. Greet customers,"
        " answer general questions, and guide them to the right window."
    ),
    AgentRole.FINANCIAL_ADVISOR: (
        "You are a licensed financial advisor at this branch. Help with"
        " account balances, history, and transaction requests."
    ),
    AgentRole.SALES_ASSOCIATE: (
        "You are a sales associate at this branch. Help customers browse the"
        " catalog and find current offers."
    ),
}


@dataclass(frozen=True)
class PromptTemplate:
    preambles: dict[AgentRole, str] = field(
        default_factory=lambda: dict(DEFAULT_PERSONA_PREAMBLES)
    )
    window_turns: int = DEFAULT_TRANSCRIPT_WINDOW


@dataclass(frozen=True)
class SessionSnapshot:
    """Everything the prompt may mention: identity, facts, recent dialog."""

    customer_name: str = ""
    facts: tuple[tuple[str, str], ...] = ()
    transcript: tuple[tuple[str, str], ...] = ()  # (speaker, text) pairs


def build_prompt(
    snapshot: SessionSnapshot,
    utterance: str,
    role: AgentRole,
    template: PromptTemplate | None = None,
) -> str:
    """Deterministic rendering: preamble + facts + last-k turns + utterance."""
    template = template or PromptTemplate()
    lines = [template.preambles[role]]
    if snapshot.customer_name:
        lines.append(f"Customer name: {snapshot.customer_name}")
    if snapshot.facts:
        lines.append("Known customer facts:")
        lines.extend(f"- {key}: {value}" for key, value in snapshot.facts)
    window = snapshot.transcript[-template.window_turns :]
    if window:
        lines.append("Conversation so far:")
        lines.extend(f"{speaker}: {text}" for speaker, text in window)
    lines.append(f"customer: {utterance}")
    lines.append("agent:")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Translation hooks. The model is English-only, so translation happens
# before and after inference, never inside it.


class Translator(Protocol):
    def translate(self, text: str, from_locale: str, to_locale: str) -> str: ...


class IdentityTranslator:
    """Default no-op translator."""

    def translate(self, text: str, from_locale: str, to_locale: str) -> str:
        return text


def translate(
    text: str, from_locale: str, to_locale: str, translator: Translator | None = None
) -> str:
    """Apply the pluggable translator; identity when locales match or none is set.

    May raise TranslatorUnavailable from the plug-in; callers fall back to
    identity and note it in the audit log.
    """
    if from_locale == to_locale or translator is None or isinstance(translator, IdentityTranslator):
        return text
    return translator.translate(text, from_locale, to_locale)


# ---------------------------------------------------------------------------
# Response validation


@dataclass(frozen=True)
class ValidationPolicy:
    allowed_intents: frozenset[ServiceNeed]
    max_len: int = DEFAULT_MAX_RESPONSE_CHARS


@dataclass(frozen=True)
class Valid:
    pass


@dataclass(frozen=True)
class HallucinationSuspected:
    reason: str


ValidationResult = Valid | HallucinationSuspected


def validate(
    response: InferenceResponse, policy: ValidationPolicy, session_facts: list[str]
) -> ValidationResult:
    """Three checks: allowed intent, bounded length, grounded monetary amounts.

    Every numeric monetary token in the response must appear verbatim inside
    some session fact; an unknown intent is never allowed.
    """
    if response.intent is None or response.intent not in policy.allowed_intents:
        shown = "Unknown" if response.intent is None else response.intent.value
        return HallucinationSuspected(reason=f"intent {shown} not allowed")
    if len(response.text) > policy.max_len:
        return HallucinationSuspected(reason=f"response exceeds {policy.max_len} chars")
    for token in MONEY_TOKEN_RE.findall(response.text):
        if not any(token in fact for fact in session_facts):
            return HallucinationSuspected(reason=f"fact_echo: {token} not in session facts")
    return Valid()


# ---------------------------------------------------------------------------
# Sentiment stub: signed lexicon count over a word list shipped as data.

_WORD_RE = re.compile(r"[a-z']+")
_lexicon_cache: dict[str, int] | None = None


def load_lexicon() -> dict[str, int]:
    """Parse the packaged lexicon: one `word polarity` pair per line."""
    global _lexicon_cache
    if _lexicon_cache is None:
        lexicon: dict[str, int] = {}
        text = resources.files("branchlab").joinpath("data/lexicon.txt").read_text("utf-8")
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            word, polarity = line.split()
            lexicon[word] = int(polarity)
        _lexicon_cache = lexicon
    return _lexicon_cache


def sentiment(utterance: str) -> int:
    """Sign of (positive word count - negative word count): -1, 0, or +1."""
    lexicon = load_lexicon()
    score = sum(lexicon.get(word, 0) for word in _WORD_RE.findall(utterance.lower()))
    return (score > 0) - (score < 0)


def canonical_response_bytes(response: InferenceResponse) -> bytes:
    """Stable serialization of a response, used for determinism checks."""
    obj = {
        "backend": response.backend,
        "intent": "Unknown" if response.intent is None else response.intent.value,
        "latency_ms": response.latency_ms,
        "text": response.text,
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
