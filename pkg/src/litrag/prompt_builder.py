"""Simulated-dialog prompt rendering.

Two prompt shapes are produced, both as single-turn-completion
transcripts in Zephyr-style chat markup:

* the answer prompt — a staged conversation in which the assistant
  asks for literature snippets, the user supplies them one by one, and
  the assistant finally commits to answering concisely;
* the query-translation prompt — an expert-librarian system
  instruction followed by few-shot (question, structured query) pairs
  and the live question.

Rendering is byte-exact and pinned by golden fixtures: every closed
turn is ``<|role|>content</s>`` on its own line (the system tag is
followed by one space), and the prompt ends with an open
``<|assistant|>`` tag for the model to complete.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .query_ast import DEFAULT_FIELDS, QueryError, parse

__all__ = [
    "ANSWER_SYSTEM_TEXT",
    "RESERVED_TAGS",
    "DEFAULT_FEW_SHOTS",
    "InvalidFewShotError",
    "RoleTagInContentError",
    "Snippet",
    "Transcript",
    "Turn",
    "build_answer_prompt",
    "build_translation_prompt",
    "translation_system_text",
]

_ROLES = ("system", "user", "assistant")

#: Chat-markup strings that must never appear inside turn content.
RESERVED_TAGS = ("<|system|>", "<|user|>", "<|assistant|>", "</s>")

ANSWER_SYSTEM_TEXT = (
    "This is a system prompt, you are a helpful assistant. "
    "Please answer truthfully and logically. "
    "If you don't know or aren't sure about something, say so clearly."
)
_ASK_FOR_SNIPPETS = "Can you provide me with some snippets from the literature to answer?"
_ANYTHING_ELSE = "Ok, do you have anything else?"
_ALL_FOUND = "This is all I found in the literature."
_NOTHING_FOUND = "I could not find anything in the literature."
_READY = "Awesome! I am ready to respond in a concise way."
_GO_AHEAD = "Great! Go ahead!"

_TRANSLATION_SYSTEM_PREFIX = (
    "You are an expert librarian in creating structured queries to be "
    "submitted to NASA SciX. The system accepts queries using the Apache "
    "Solr search syntax. Available search fields include "
)

DEFAULT_FEW_SHOTS = (
    (
        "What was written by Michael Kurtz in 2016?",
        '((author:"Kurtz, Michael") AND (year:2016))',
    ),
    ("What are blackholes?", "(abs:(black holes))"),
)


class RoleTagInContentError(ValueError):
    """Turn content embeds one of the reserved chat-markup tags."""

    def __init__(self, tag: str) -> None:
        super().__init__(f"content must not contain the reserved tag {tag!r}")
        self.tag = tag


class InvalidFewShotError(ValueError):
    """A few-shot example's query string is not a valid structured query."""

    def __init__(self, index: int, reason: str) -> None:
        super().__init__(f"few-shot example {index} has an invalid query: {reason}")
        self.index = index


@dataclass(frozen=True)
class Turn:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in _ROLES:
            raise ValueError(f"unknown role: {self.role!r}")
        if not self.content:
            raise ValueError("turn content must be nonempty")
        for tag in RESERVED_TAGS:
            if tag in self.content:
                raise RoleTagInContentError(tag)


@dataclass(frozen=True)
class Snippet:
    """One retrieved piece of literature text offered to the model."""

    text: str
    source_id: str
    score: float
    origin: str
    truncated: bool = False

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("snippet text must be nonempty")
        if self.origin not in ("search", "semantic"):
            raise ValueError(f"unknown snippet origin: {self.origin!r}")
        if not math.isfinite(self.score):
            raise ValueError("snippet score must be finite")


@dataclass(frozen=True)
class Transcript:
    """An ordered simulated dialog, optionally open for completion."""

    turns: tuple[Turn, ...]
    terminal_assistant_open: bool = True

    def __post_init__(self) -> None:
        if not self.turns or self.turns[0].role != "system":
            raise ValueError("transcript must start with a system turn")
        for i, turn in enumerate(self.turns[1:]):
            expected = "user" if i % 2 == 0 else "assistant"
            if turn.role != expected:
                raise ValueError(
                    f"turn {i + 1} must be {expected!r}, got {turn.role!r}"
                )
        if self.terminal_assistant_open and self.turns[-1].role != "user":
            raise ValueError("an open prompt must end on a user turn")

    def render(self) -> str:
        lines = []
        for turn in self.turns:
            space = " " if turn.role == "system" else ""
            lines.append(f"<|{turn.role}|>{space}{turn.content}</s>")
        if self.terminal_assistant_open:
            lines.append("<|assistant|>")
        return "\n".join(lines)


def _dialog(system_text: str, exchanges: list[str]) -> Transcript:
    turns = [Turn("system", system_text)]
    for i, content in enumerate(exchanges):
        turns.append(Turn("user" if i % 2 == 0 else "assistant", content))
    return Transcript(turns=tuple(turns))


def build_answer_prompt(question: str, snippets: list[Snippet]) -> str:
    """Render the staged snippet-feeding dialog for answering ``question``."""
    if not question:
        raise ValueError("question must be nonempty")
    exchanges = [question, _ASK_FOR_SNIPPETS]
    if snippets:
        for snippet in snippets:
            exchanges.append(snippet.text)
            exchanges.append(_ANYTHING_ELSE)
        exchanges.append(_ALL_FOUND)
    else:
        exchanges.append(_NOTHING_FOUND)
    exchanges.append(_READY)
    exchanges.append(_GO_AHEAD)
    return _dialog(ANSWER_SYSTEM_TEXT, exchanges).render()


def _quoted_list(names: tuple[str, ...]) -> str:
    quoted = [f'"{name}"' for name in names]
    if len(quoted) == 1:
        return quoted[0]
    if len(quoted) == 2:
        return f"{quoted[0]} and {quoted[1]}"
    return ", ".join(quoted[:-1]) + f", and {quoted[-1]}"


def translation_system_text(fields: tuple[str, ...] = DEFAULT_FIELDS) -> str:
    """The librarian system instruction, naming the active field set."""
    if not fields:
        raise ValueError("at least one search field is required")
    return f"{_TRANSLATION_SYSTEM_PREFIX}{_quoted_list(fields)}."


def build_translation_prompt(
    question: str,
    few_shots: list[tuple[str, str]] | tuple[tuple[str, str], ...] = DEFAULT_FEW_SHOTS,
    *,
    fields: tuple[str, ...] = DEFAULT_FIELDS,
) -> str:
    """Render the question→structured-query few-shot dialog."""
    if not question:
        raise ValueError("question must be nonempty")
    exchanges = []
    for index, (shot_question, shot_query) in enumerate(few_shots):
        try:
            parse(shot_query, fields=fields)
        except QueryError as exc:
            raise InvalidFewShotError(index, str(exc)) from exc
        exchanges.append(shot_question)
        exchanges.append(shot_query)
    exchanges.append(question)
    return _dialog(translation_system_text(fields), exchanges).render()
