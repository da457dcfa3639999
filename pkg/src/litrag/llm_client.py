"""Language-model backends and the request-queueing client.

Backends come in two kinds:

* :class:`ScriptedStubBackend` — a deterministic in-process fake.  A
  script of ``{"when_contains", "respond"}`` rules maps prompts to
  responses; unmatched prompts get a fixed fallback.  It supports
  stepwise scoring (exposing a score per vocabulary token at each
  generation step), so grammar-constrained decoding runs against it
  exactly as it would against a logit-exposing model, and it records
  call timing so tests can prove the queue discipline.
* :class:`RemoteCompletionBackend` — HTTP client for the de facto
  completions API (``POST /v1/completions``).  It cannot expose
  per-step scores, so query translation falls back to a
  generate-then-validate repair loop.

:class:`LlmClient` wraps a backend behind a bounded FIFO: at most
``max_parallel_requests`` calls run against the backend (default 1 —
one model, one GPU, one request at a time) and at most
``queue_capacity`` callers may wait; everyone else is rejected
immediately with :class:`QueueFullError`.
"""
from __future__ import annotations

import json
import os
import re
import threading
import time
import zlib
from dataclasses import dataclass

from .grammar import (
    Vocabulary,
    constrained_generate,
    new_session,
    stub_ascii_vocabulary,
)
from .query_ast import DEFAULT_FIELDS, QueryError, parse

__all__ = [
    "BackendDescriptor",
    "BackendTimeoutError",
    "BackendUnavailableError",
    "CompletionParams",
    "CompletionResult",
    "LlmClient",
    "QueueFullError",
    "RemoteCompletionBackend",
    "ScriptedStubBackend",
    "StepwiseUnsupportedError",
    "StubRule",
    "TranslationFailedError",
    "load_script",
]

STUB_FALLBACK_TEXT = "I don't know."
_RETRY_INSTRUCTION = "That is not a valid query. Reply with only the query."
_OPEN_ASSISTANT = "<|assistant|>"


class BackendUnavailableError(RuntimeError):
    """The model backend could not be reached or answered an error."""


class BackendTimeoutError(BackendUnavailableError):
    """The model backend did not answer within the configured timeout."""


class QueueFullError(RuntimeError):
    """All waiting slots are taken; the request was rejected up front."""


class StepwiseUnsupportedError(RuntimeError):
    """The backend exposes no per-step scores; use the repair fallback."""


class TranslationFailedError(RuntimeError):
    """No valid structured query after the allowed number of attempts."""

    def __init__(self, attempts: int, last_output: str) -> None:
        super().__init__(
            f"no valid query after {attempts} attempts; last output: {last_output!r}"
        )
        self.attempts = attempts
        self.last_output = last_output


@dataclass(frozen=True)
class CompletionParams:
    max_tokens: int = 512
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] = ("</s>",)

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be at least 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not self.stop_sequences:
            raise ValueError("at least one stop sequence is required")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    finish_reason: str  # "stop" | "length"


@dataclass(frozen=True)
class BackendDescriptor:
    kind: str  # "remote_completion" | "scripted_stub"
    base_url: str = ""
    model_name: str = ""
    supports_stepwise: bool = False
    max_parallel_requests: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("remote_completion", "scripted_stub"):
            raise ValueError(f"unknown backend kind: {self.kind!r}")
        if self.kind == "scripted_stub" and not self.supports_stepwise:
            raise ValueError("the scripted stub always supports stepwise scoring")
        if self.max_parallel_requests < 1:
            raise ValueError("max_parallel_requests must be at least 1")


@dataclass(frozen=True)
class StubRule:
    when_contains: str
    respond: str


def load_script(path: str) -> list[StubRule]:
    """Read a stub script file: a JSON list of rule objects."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return [StubRule(item["when_contains"], item["respond"]) for item in raw]


# The stub's "tokens" for budget accounting: maximal non-space runs,
# each carrying its trailing whitespace so concatenation is lossless.
_STUB_TOKEN_RE = re.compile(r"\S+\s*")


class ScriptedStubBackend:
    """Deterministic fake model with stepwise scoring and call tracing.

    ``complete`` answers with the first rule whose ``when_contains``
    occurs in the prompt, else a fixed fallback.  ``step_scores``
    drives generation toward the same rule's response: the token that
    extends the emitted text along the target gets the top score, the
    end-of-sequence token wins once the target is fully emitted, and
    everything else gets deterministic sub-unit noise (so unmatched
    prompts exercise adversarial-random decoding).  ``delay`` inserts
    a sleep inside each ``complete`` call, widening the window that
    queue-discipline tests probe for overlap.
    """

    def __init__(
        self,
        script: list[StubRule] | None = None,
        *,
        vocabulary: Vocabulary | None = None,
        seed: int = 0,
        delay: float = 0.0,
        model_name: str = "scripted-stub",
    ) -> None:
        self.script = list(script or [])
        self.vocabulary = vocabulary or stub_ascii_vocabulary()
        self.seed = seed
        self.delay = delay
        self.descriptor = BackendDescriptor(
            kind="scripted_stub",
            model_name=model_name,
            supports_stepwise=True,
        )
        self._trace_lock = threading.Lock()
        self._inflight = 0
        self.max_observed_inflight = 0
        self.calls: list[tuple[float, float]] = []  # (enter, exit) per call

    def _match(self, prompt: str) -> str | None:
        for rule in self.script:
            if rule.when_contains in prompt:
                return rule.respond
        return None

    def _enter(self) -> float:
        with self._trace_lock:
            self._inflight += 1
            self.max_observed_inflight = max(
                self.max_observed_inflight, self._inflight
            )
        return time.monotonic()

    def _exit(self, entered: float) -> None:
        with self._trace_lock:
            self._inflight -= 1
            self.calls.append((entered, time.monotonic()))

    def complete(self, prompt: str, params: CompletionParams) -> CompletionResult:
        if not prompt:
            raise ValueError("prompt must be nonempty")
        entered = self._enter()
        try:
            if self.delay:
                time.sleep(self.delay)
            text = self._match(prompt)
            if text is None:
                text = STUB_FALLBACK_TEXT
            for stop in params.stop_sequences:
                cut = text.find(stop)
                if cut != -1:
                    text = text[:cut]
            tokens = _STUB_TOKEN_RE.findall(text)
            if len(tokens) > params.max_tokens:
                return CompletionResult(
                    text="".join(tokens[: params.max_tokens]).rstrip(),
                    finish_reason="length",
                )
            return CompletionResult(text=text, finish_reason="stop")
        finally:
            self._exit(entered)

    def _noise(self, prompt: str, emitted: str, token_id: int) -> float:
        key = f"{self.seed}|{token_id}|{emitted}|{prompt}".encode("utf-8")
        return zlib.crc32(key) / 2**32

    def step_scores(self, prompt: str, emitted_so_far: str) -> list[tuple[int, float]]:
        target = self._match(prompt)
        scores = []
        for token_id, token in enumerate(self.vocabulary.tokens):
            score = self._noise(prompt, emitted_so_far, token_id)
            if target is not None:
                if token_id == self.vocabulary.eos_id:
                    if emitted_so_far == target:
                        score += 2000.0
                else:
                    text = token.decode("utf-8", errors="replace")
                    candidate = emitted_so_far + text
                    if target.startswith(candidate):
                        score += 1000.0 + len(text)
            scores.append((token_id, score))
        return scores


class RemoteCompletionBackend:
    """HTTP client for a completions-shaped inference server.

    POSTs ``{"model", "prompt", "max_tokens", "temperature", "stop"}``
    to ``{base_url}/v1/completions`` and reads
    ``{"choices": [{"text", "finish_reason"}]}``.  A bearer token is
    taken from ``LITRAG_LLM_TOKEN`` when set.  No per-step scores are
    available, so ``step_scores`` always raises.
    """

    def __init__(
        self,
        base_url: str,
        model_name: str,
        *,
        max_parallel_requests: int = 1,
        timeout: float = 120.0,
        transport=None,
    ) -> None:
        import httpx

        self.descriptor = BackendDescriptor(
            kind="remote_completion",
            base_url=base_url,
            model_name=model_name,
            supports_stepwise=False,
            max_parallel_requests=max_parallel_requests,
        )
        headers = {}
        token = os.environ.get("LITRAG_LLM_TOKEN")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            base_url=base_url, headers=headers, timeout=timeout, transport=transport
        )

    def close(self) -> None:
        self._client.close()

    def complete(self, prompt: str, params: CompletionParams) -> CompletionResult:
        import httpx

        if not prompt:
            raise ValueError("prompt must be nonempty")
        try:
            resp = self._client.post(
                "/v1/completions",
                json={
                    "model": self.descriptor.model_name,
                    "prompt": prompt,
                    "max_tokens": params.max_tokens,
                    "temperature": params.temperature,
                    "stop": list(params.stop_sequences),
                },
            )
            resp.raise_for_status()
            payload = resp.json()
        except httpx.TimeoutException as exc:
            raise BackendTimeoutError(f"completion timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise BackendUnavailableError(f"completion failed: {exc}") from exc
        try:
            choice = payload["choices"][0]
            text = choice["text"]
            finish_reason = choice.get("finish_reason", "stop")
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailableError(
                f"malformed completion response: {exc}"
            ) from exc
        for stop in params.stop_sequences:
            cut = text.find(stop)
            if cut != -1:
                text = text[:cut]
        return CompletionResult(text=text, finish_reason=finish_reason)

    def step_scores(self, prompt: str, emitted_so_far: str) -> list[tuple[int, float]]:
        raise StepwiseUnsupportedError(
            "remote completion backends expose no per-step scores"
        )


def build_backend_from_env(model_name: str | None = None):
    """Remote backend from LITRAG_LLM_URL / LITRAG_LLM_MODEL, else None."""
    base_url = os.environ.get("LITRAG_LLM_URL")
    if not base_url:
        return None
    name = model_name or os.environ.get("LITRAG_LLM_MODEL", "default")
    return RemoteCompletionBackend(base_url, name)


def _extract_query_candidate(raw: str) -> str:
    """Strip chatter around the first balanced parenthesized group.

    Model output like ``Sure! Here is your query: (abs:iSpec)`` becomes
    ``(abs:iSpec)``.  If no balanced group exists, the stripped text is
    returned unchanged and the parser will reject it.
    """
    text = raw.strip()
    start = text.find("(")
    if start == -1:
        return text
    depth = 0
    for i in range(start, len(text)):
        if text[i] == "(":
            depth += 1
        elif text[i] == ")":
            depth -= 1
            if depth == 0:
                return text[start:i + 1]
    return text


class LlmClient:
    """Thread-safe facade adding bounded queueing over one backend.

    Admission control: at most ``max_parallel_requests`` calls are
    active inside the backend and at most ``queue_capacity`` more may
    block waiting; a caller arriving beyond that is rejected with
    :class:`QueueFullError` without queueing.  A whole query
    translation (however many scoring steps it takes) occupies a
    single slot, because it is one logical generation.
    """

    def __init__(self, backend, *, queue_capacity: int = 32) -> None:
        if queue_capacity < 0:
            raise ValueError("queue_capacity must be >= 0")
        self.backend = backend
        self.queue_capacity = queue_capacity
        self.max_parallel_requests = backend.descriptor.max_parallel_requests
        self._slots = threading.Semaphore(self.max_parallel_requests)
        self._admitted = 0
        self._admit_lock = threading.Lock()

    def _admit(self) -> None:
        with self._admit_lock:
            if self._admitted >= self.max_parallel_requests + self.queue_capacity:
                raise QueueFullError(
                    f"{self._admitted} requests already admitted "
                    f"({self.max_parallel_requests} active + "
                    f"{self.queue_capacity} waiting)"
                )
            self._admitted += 1

    def _release(self) -> None:
        with self._admit_lock:
            self._admitted -= 1

    def complete(self, prompt: str, params: CompletionParams) -> CompletionResult:
        self._admit()
        try:
            with self._slots:
                return self.backend.complete(prompt, params)
        finally:
            self._release()

    def supports_stepwise(self) -> bool:
        return self.backend.descriptor.supports_stepwise

    def translate_query(
        self,
        prompt: str,
        *,
        fields: tuple[str, ...] = DEFAULT_FIELDS,
        max_attempts: int = 3,
        max_tokens: int = 256,
    ):
        """Produce a parsed query AST for a rendered translation prompt.

        Stepwise backends decode under the query grammar, so the output
        parses by construction.  Completion-only backends run a repair
        loop: generate, strip chatter, parse; on failure the invalid
        output and a corrective instruction are appended to the dialog
        and generation retries, up to ``max_attempts``.
        """
        self._admit()
        try:
            with self._slots:
                if self.backend.descriptor.supports_stepwise:
                    return self._translate_constrained(prompt, fields, max_tokens)
                return self._translate_with_fallback(prompt, fields, max_attempts, max_tokens)
        finally:
            self._release()

    def _translate_constrained(self, prompt, fields, max_tokens):
        session = new_session(self.backend.vocabulary, fields=fields)
        size = len(session.vocabulary.tokens)

        def proposer(live_session):
            dense = [0.0] * size
            for token_id, score in self.backend.step_scores(
                prompt, live_session.emitted
            ):
                dense[token_id] = score
            return dense

        text = constrained_generate(session, proposer, max_tokens)
        return parse(text, fields=fields)

    def _translate_with_fallback(self, prompt, fields, max_attempts, max_tokens):
        if max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        params = CompletionParams(max_tokens=max_tokens)
        current = prompt
        last_output = ""
        for _ in range(max_attempts):
            result = self.backend.complete(current, params)
            last_output = result.text
            candidate = _extract_query_candidate(result.text)
            try:
                return parse(candidate, fields=fields)
            except QueryError:
                if not current.endswith(_OPEN_ASSISTANT):
                    raise
                current = (
                    current[: -len(_OPEN_ASSISTANT)]
                    + f"{_OPEN_ASSISTANT}{result.text}</s>\n"
                    + f"<|user|>{_RETRY_INSTRUCTION}</s>\n"
                    + _OPEN_ASSISTANT
                )
        raise TranslationFailedError(max_attempts, last_output)
