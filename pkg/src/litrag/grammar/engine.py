"""Decoding sessions: per-step token masks and constrained generation.

A session owns a recognizer chart over the bytes emitted so far and a
byte trie over the vocabulary. ``allowed_tokens`` walks the trie with
trial advances (shared prefixes are advanced once) and rolls the chart
back, so computing a mask never perturbs the session. Masks are cached
per position.

Sessions are single-owner mutable values: ``advance`` mutates in place
and returns the same session. Share nothing across threads.

The chart kernel is compiled (``_kernel_cy``) when the extension built,
with a pure-Python twin as fallback; set ``LITRAG_PURE_PYTHON=1`` to
force the fallback.
"""

from __future__ import annotations

import math
import os
import random
from functools import lru_cache

from litrag.query_ast import DEFAULT_FIELDS

from .cfg import Cfg, compile_tables, query_grammar
from .vocabulary import TokenTrie, Vocabulary

if os.environ.get("LITRAG_PURE_PYTHON"):
    from . import _kernel_py as _kernel
else:
    try:
        from . import _kernel_cy as _kernel  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernel_py as _kernel


def kernel_name() -> str:
    """Which chart kernel is active: "cython" or "python"."""
    return _kernel.KERNEL_NAME


class GrammarUnreachableError(Exception):
    """No sentence of the grammar is reachable with this vocabulary."""


class IllegalTokenError(Exception):
    def __init__(self, token_id: int):
        self.token_id = token_id
        super().__init__(f"token {token_id} is not allowed here")


class BudgetExhaustedError(Exception):
    def __init__(self, steps: int, emitted: str):
        self.steps = steps
        self.emitted = emitted
        super().__init__(f"no accepted sentence within {steps} tokens; emitted so far: {emitted!r}")


class SessionClosedError(RuntimeError):
    def __init__(self):
        super().__init__("session is closed (eos was emitted)")


@lru_cache(maxsize=16)
def _trie_for(vocab: Vocabulary) -> TokenTrie:
    return TokenTrie(vocab)


class TokenMask:
    """Allowed-token bitmap for one decoding position. The eos token is
    never set in ``allowed``; its legality is ``eos_allowed``."""

    __slots__ = ("allowed", "eos_allowed")

    def __init__(self, allowed: bytearray, eos_allowed: bool):
        self.allowed = allowed
        self.eos_allowed = eos_allowed

    def is_allowed(self, token_id: int) -> bool:
        return bool(self.allowed[token_id])

    def allowed_ids(self) -> list[int]:
        return [tid for tid, bit in enumerate(self.allowed) if bit]

    def count(self) -> int:
        return sum(self.allowed)


class DecodeSession:
    """Grammar-constrained decoding state over a vocabulary."""

    __slots__ = ("grammar", "vocabulary", "_trie", "_kernel", "_chart", "_emitted", "_mask", "closed")

    def __init__(self, grammar: Cfg, vocabulary: Vocabulary, *, kernel=None):
        self.grammar = grammar
        self.vocabulary = vocabulary
        self._trie = _trie_for(vocabulary)
        self._kernel = kernel or _kernel
        self._chart = self._kernel.Chart(compile_tables(grammar))
        self._emitted = bytearray()
        self._mask = None
        self.closed = False
        mask = self.allowed_tokens()
        if mask.count() == 0 and not mask.eos_allowed:
            raise GrammarUnreachableError(
                "no token of this vocabulary can start a grammar sentence"
            )

    @property
    def emitted_bytes(self) -> bytes:
        return bytes(self._emitted)

    @property
    def emitted(self) -> str:
        """Emitted text; undecodable partial multi-byte tails are replaced."""
        return self._emitted.decode("utf-8", errors="replace")

    @property
    def position(self) -> int:
        return len(self._emitted)

    @property
    def accepting(self) -> bool:
        return self._chart.accepting()

    def allowed_tokens(self) -> TokenMask:
        if self.closed:
            raise SessionClosedError()
        if self._mask is None:
            out = bytearray(self.vocabulary.size)
            self._kernel.compute_mask(self._chart, self._trie, out)
            self._mask = TokenMask(out, self._chart.accepting())
        return self._mask

    def advance(self, token_id: int) -> "DecodeSession":
        if self.closed:
            raise SessionClosedError()
        if not 0 <= token_id < self.vocabulary.size:
            raise IllegalTokenError(token_id)
        mask = self.allowed_tokens()
        if token_id == self.vocabulary.eos_id:
            if not mask.eos_allowed:
                raise IllegalTokenError(token_id)
            self.closed = True
            return self
        if not mask.is_allowed(token_id):
            raise IllegalTokenError(token_id)
        for byte in self.vocabulary.tokens[token_id]:
            if not self._chart.advance(byte):
                raise RuntimeError("mask/advance disagreement (kernel bug)")
        self._emitted.extend(self.vocabulary.tokens[token_id])
        self._mask = None
        return self


def new_session(vocabulary: Vocabulary, fields=DEFAULT_FIELDS) -> DecodeSession:
    """Open a decoding session over the full query grammar."""
    return DecodeSession(query_grammar(tuple(fields)), vocabulary)


def allowed_tokens(session: DecodeSession) -> TokenMask:
    return session.allowed_tokens()


def advance(session: DecodeSession, token_id: int) -> DecodeSession:
    return session.advance(token_id)


def _pick(mask: TokenMask, scores, eos_id: int, include_eos: bool,
          temperature: float, rng) -> int | None:
    candidates = mask.allowed_ids()
    if include_eos and mask.eos_allowed:
        candidates.append(eos_id)
    if not candidates:
        return None
    if temperature <= 0.0:
        best_score = max(scores[tid] for tid in candidates)
        return min(tid for tid in candidates if scores[tid] == best_score)
    weights = [math.exp(float(scores[tid]) / temperature) for tid in candidates]
    return (rng or random).choices(candidates, weights=weights, k=1)[0]


def constrained_generate(session: DecodeSession, proposer, max_tokens: int,
                         *, temperature: float = 0.0, rng=None) -> str:
    """Generate a complete grammar sentence, token by token.

    ``proposer(session)`` returns one finite score per token id
    (sequence of length ``vocabulary.size``). Greedy selection over the
    allowed set, ties to the lowest id; eos competes only while it is
    legal. If ``max_tokens`` is reached while not accepting, generation
    extends (without eos) up to ``2 * max_tokens`` total, then raises
    BudgetExhaustedError. Identical session, proposer, and temperature
    settings produce identical output.
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    eos = session.vocabulary.eos_id
    steps = 0
    while steps < max_tokens:
        mask = session.allowed_tokens()
        token = _pick(mask, proposer(session), eos, True, temperature, rng)
        if token is None:
            raise GrammarUnreachableError(
                f"no allowed token at position {session.position}"
            )
        if token == eos:
            text = session.emitted_bytes.decode("utf-8")
            session.advance(eos)
            return text
        session.advance(token)
        steps += 1
    while True:
        if session.accepting:
            text = session.emitted_bytes.decode("utf-8")
            session.advance(eos)
            return text
        if steps >= 2 * max_tokens:
            raise BudgetExhaustedError(steps, session.emitted)
        mask = session.allowed_tokens()
        token = _pick(mask, proposer(session), eos, False, temperature, rng)
        if token is None:
            raise GrammarUnreachableError(
                f"no allowed token at position {session.position}"
            )
        session.advance(token)
        steps += 1
