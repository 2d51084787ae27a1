"""LLM and reward-model access: one wire backend, deterministic scripted twins.

The wire backend speaks the OpenAI-compatible chat-completions protocol and
sends each prompt as a single user message (no system message). Scripted
backends answer from ordered match rules and make the whole pipeline runnable
offline, byte-for-byte reproducibly; they report zero latency on purpose so
offline artifacts do not embed timing noise.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol, Sequence

import requests

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 1.0
DEFAULT_MAX_OUTPUT_TOKENS = 1024
DEFAULT_API_KEY_ENV = "QNAV_API_KEY"


class GatewayError(Exception):
    """Base class for everything the gateway can raise."""


class GatewayAuthError(GatewayError):
    """Credentials rejected (HTTP 401/403)."""


class GatewayTransientError(GatewayError):
    """Timeouts, connection trouble, 429 and 5xx; safe to retry."""


class GatewayProtocolError(GatewayError):
    """The endpoint answered with something we cannot interpret."""


class GatewayRetryError(GatewayError):
    """Retry budget exhausted; the last transient error is chained."""


class UnmatchedPromptError(GatewayError):
    """A strict scripted backend saw a prompt no rule covers."""


class ScriptExhaustedError(GatewayError):
    """A scripted backend ran past the end of its response script."""


@dataclass(frozen=True)
class ChatRequest:
    prompt: str
    temperature: float = DEFAULT_TEMPERATURE
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS


@dataclass(frozen=True)
class Usage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __add__(self, other: "Usage") -> "Usage":
        return Usage(self.input_tokens + other.input_tokens, self.output_tokens + other.output_tokens)


@dataclass(frozen=True)
class ChatExchange:
    """One completed request/response pair, with accounting."""

    request: ChatRequest
    text: str
    usage: Usage
    latency_s: float
    attempts: int = 1


class ChatBackend(Protocol):
    def complete(self, request: ChatRequest) -> ChatExchange: ...


def call_with_retries(
    fn: Callable[[], ChatExchange],
    max_attempts: int,
    backoff_base: float,
    sleep: Callable[[float], None] = time.sleep,
) -> ChatExchange:
    """Run fn, retrying transient failures with exponential backoff.

    The returned exchange has attempts set to the number of calls made.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be positive")
    last: GatewayTransientError | None = None
    for attempt in range(1, max_attempts + 1):
        try:
            exchange = fn()
        except GatewayTransientError as exc:
            last = exc
            if attempt < max_attempts:
                delay = backoff_base * (2 ** (attempt - 1))
                log.warning("transient gateway failure (attempt %d/%d): %s", attempt, max_attempts, exc)
                sleep(delay)
            continue
        return replace(exchange, attempts=attempt)
    raise GatewayRetryError(f"gave up after {max_attempts} attempts") from last


@dataclass(frozen=True)
class WireConfig:
    """Where and how to reach an OpenAI-compatible chat endpoint.

    The API key is read from the environment variable named by api_key_env;
    if unset, requests go out without an Authorization header (local
    endpoints often need none) and any 401/403 surfaces as an auth error.
    """

    base_url: str
    model: str
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout_s: float = 120.0
    max_attempts: int = 3
    backoff_base_s: float = 0.5
    max_in_flight: int = 4


class OpenAIChatBackend:
    """Chat-completions client with retry, backoff, and an in-flight cap."""

    def __init__(self, cfg: WireConfig, session: requests.Session | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.cfg = cfg
        self._session = session or requests.Session()
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(cfg.max_in_flight)

    def complete(self, request: ChatRequest) -> ChatExchange:
        with self._slots:
            return call_with_retries(
                lambda: self._complete_once(request),
                self.cfg.max_attempts,
                self.cfg.backoff_base_s,
                self._sleep,
            )

    def _complete_once(self, request: ChatRequest) -> ChatExchange:
        url = self.cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        started = time.monotonic()
        try:
            resp = self._session.post(url, json=payload, headers=headers, timeout=self.cfg.timeout_s)
        except (requests.Timeout, requests.ConnectionError) as exc:
            raise GatewayTransientError(f"request failed: {exc}") from exc
        latency = time.monotonic() - started
        if resp.status_code in (401, 403):
            raise GatewayAuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise GatewayTransientError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise GatewayProtocolError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            doc = resp.json()
            text = doc["choices"][0]["message"]["content"]
            if not isinstance(text, str):
                raise TypeError("content is not a string")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GatewayProtocolError(f"malformed completion payload: {exc}") from exc
        usage_doc = doc.get("usage") or {}
        usage = Usage(
            input_tokens=int(usage_doc.get("prompt_tokens", 0)),
            output_tokens=int(usage_doc.get("completion_tokens", 0)),
        )
        if not usage_doc:
            log.warning("completion response carried no usage block")
        return ChatExchange(request=request, text=text, usage=usage, latency_s=latency)


@dataclass
class ScriptedRule:
    """Substring matcher -> canned response(s).

    response may be a single string or a sequence consumed call by call (the
    last entry repeats once exhausted). fail_times injects that many
    transient failures before the rule answers, for retry testing.
    """

    contains: str
    response: str | Sequence[str]
    fail_times: int = 0
    _cursor: int = field(default=0, repr=False)

    def next_response(self) -> str:
        if isinstance(self.response, str):
            return self.response
        if not self.response:
            raise ScriptExhaustedError(f"rule {self.contains!r} has no responses")
        idx = min(self._cursor, len(self.response) - 1)
        self._cursor += 1
        return self.response[idx]


def _word_usage(prompt: str, text: str) -> Usage:
    # Offline stand-in for tokenizer counts: deterministic word counts.
    return Usage(input_tokens=len(prompt.split()), output_tokens=len(text.split()))


class ScriptedChatBackend:
    """Deterministic chat backend answering from rules or a fixed script.

    With a script, responses are returned in order regardless of the prompt
    and running out raises. Otherwise the first matching rule answers; in
    strict mode an unmatched prompt raises, else default_response is used.
    Every exchange is appended to call_log.
    """

    def __init__(
        self,
        rules: Sequence[ScriptedRule] = (),
        *,
        script: Sequence[str] | None = None,
        strict: bool = True,
        default_response: str | None = None,
    ):
        self.rules = list(rules)
        self.script = list(script) if script is not None else None
        self.strict = strict
        self.default_response = default_response
        self.call_log: list[ChatExchange] = []
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatExchange:
        with self._lock:
            text = self._respond(request.prompt)
            exchange = ChatExchange(
                request=request,
                text=text,
                usage=_word_usage(request.prompt, text),
                latency_s=0.0,
            )
            self.call_log.append(exchange)
            return exchange

    def _respond(self, prompt: str) -> str:
        if self.script is not None:
            if not self.script:
                raise ScriptExhaustedError("scripted backend ran out of responses")
            return self.script.pop(0)
        for rule in self.rules:
            if rule.contains in prompt:
                if rule.fail_times > 0:
                    rule.fail_times -= 1
                    raise GatewayTransientError(f"scripted failure for {rule.contains!r}")
                return rule.next_response()
        if not self.strict and self.default_response is not None:
            return self.default_response
        raise UnmatchedPromptError(f"no rule matches prompt: {prompt[:120]!r}...")


class RetryingBackend:
    """Wrap any backend with the gateway retry policy."""

    def __init__(self, inner: ChatBackend, max_attempts: int = 3, backoff_base_s: float = 0.5,
                 sleep: Callable[[float], None] = time.sleep):
        self.inner = inner
        self.max_attempts = max_attempts
        self.backoff_base_s = backoff_base_s
        self._sleep = sleep

    def complete(self, request: ChatRequest) -> ChatExchange:
        return call_with_retries(
            lambda: self.inner.complete(request), self.max_attempts, self.backoff_base_s, self._sleep
        )


# -- process reward model -----------------------------------------------------


class PrmBackend(Protocol):
    def score(self, problem: str, reasoning: str) -> float: ...


class ScriptedPrm:
    """Rule-matched process rewards; matches on the reasoning text."""

    def __init__(self, rules: Sequence[tuple[str, float]] = (), default: float = 0.5):
        self.rules = list(rules)
        self.default = default

    def score(self, problem: str, reasoning: str) -> float:
        for contains, value in self.rules:
            if contains in reasoning:
                return value
        return self.default


@dataclass(frozen=True)
class PrmWireConfig:
    """Endpoint serving POST {base_url}/score with {problem, reasoning} -> {score}."""

    base_url: str
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout_s: float = 120.0
    max_attempts: int = 3
    backoff_base_s: float = 0.5


class WirePrm:
    def __init__(self, cfg: PrmWireConfig, session: requests.Session | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.cfg = cfg
        self._session = session or requests.Session()
        self._sleep = sleep

    def score(self, problem: str, reasoning: str) -> float:
        attempts = 0
        last: Exception | None = None
        while attempts < self.cfg.max_attempts:
            attempts += 1
            try:
                return self._score_once(problem, reasoning)
            except GatewayTransientError as exc:
                last = exc
                if attempts < self.cfg.max_attempts:
                    self._sleep(self.cfg.backoff_base_s * (2 ** (attempts - 1)))
        raise GatewayRetryError(f"gave up after {self.cfg.max_attempts} attempts") from last

    def _score_once(self, problem: str, reasoning: str) -> float:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self._session.post(
                self.cfg.base_url.rstrip("/") + "/score",
                json={"problem": problem, "reasoning": reasoning},
                headers=headers,
                timeout=self.cfg.timeout_s,
            )
        except (requests.Timeout, requests.ConnectionError) as exc:
            raise GatewayTransientError(f"request failed: {exc}") from exc
        if resp.status_code in (401, 403):
            raise GatewayAuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise GatewayTransientError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise GatewayProtocolError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return float(resp.json()["score"])
        except (ValueError, KeyError, TypeError) as exc:
            raise GatewayProtocolError(f"malformed score payload: {exc}") from exc


def score_process(prm: PrmBackend, problem: str, reasoning: str) -> float:
    """Score the accumulated reasoning; out-of-range values clamp with a warning."""
    value = float(prm.score(problem, reasoning))
    if not 0.0 <= value <= 1.0:
        log.warning("process reward %.4f outside [0, 1]; clamping", value)
        value = min(1.0, max(0.0, value))
    return value


# -- usage accounting ----------------------------------------------------------


class UsageLog:
    """Thread-safe token accounting, per question and per run."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._total = Usage()
        self._by_question: dict[str, Usage] = {}
        self._calls = 0

    def record(self, exchange: ChatExchange, question_id: str | None = None) -> None:
        with self._lock:
            self._total = self._total + exchange.usage
            self._calls += 1
            if question_id is not None:
                seen = self._by_question.get(question_id, Usage())
                self._by_question[question_id] = seen + exchange.usage

    @property
    def calls(self) -> int:
        return self._calls

    def totals(self) -> Usage:
        with self._lock:
            return self._total

    def totals_for(self, question_id: str) -> Usage:
        with self._lock:
            return self._by_question.get(question_id, Usage())
