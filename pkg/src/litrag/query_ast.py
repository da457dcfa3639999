"""Structured query language: AST, parser, and canonical serializer.

Queries are a small explicit-parentheses subset of the Solr syntax:

    expr      = fieldterm | "(" expr ")" | "(" expr op expr ")"
    op        = "AND" | "OR"                       (uppercase only)
    fieldterm = field ":" value | "(" field ":" value ")"
    value     = phrase | termgroup | term | year4  (year4 for the year field)

There is no operator precedence; every binary combination carries its
own parentheses. ``parse`` is whitespace-tolerant between tokens;
``serialize`` emits one canonical spelling (fieldterms parenthesized,
single spaces, no padding) so that ``parse(serialize(node)) == node``
for every valid AST.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

DEFAULT_FIELDS: tuple[str, ...] = ("author", "abs", "year")
YEAR_FIELD = "year"
RESERVED_WORDS: tuple[str, ...] = ("AND", "OR")

WORD_RE = re.compile(r"[A-Za-z0-9_\-]+")
FIELD_NAME_RE = re.compile(r"[a-z_]+")

_WS = " \t\r\n"
_OP_RE = re.compile(r"(AND|OR)(?![A-Za-z0-9_\-])")


class QueryError(ValueError):
    """Base class for query parsing and validation failures."""


class QuerySyntaxError(QueryError):
    def __init__(self, position: int, expected: tuple[str, ...]):
        self.position = position
        self.expected = expected
        super().__init__(f"syntax error at {position}: expected {' or '.join(expected)}")


class UnknownFieldError(QueryError):
    def __init__(self, field: str, position: int):
        self.field = field
        self.position = position
        super().__init__(f"unknown field {field!r} at {position}")


class IllegalYearValueError(QueryError):
    def __init__(self, text: str, position: int):
        self.text = text
        self.position = position
        super().__init__(f"illegal year value {text!r} at {position}: expected 4 digits in 1000..9999")


class EmptyInputError(QueryError):
    def __init__(self):
        super().__init__("empty query")


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValueError(message)


@dataclass(frozen=True)
class Phrase:
    """Quoted free text; any character except the quote itself."""

    text: str

    def __post_init__(self):
        _require(len(self.text) > 0, "phrase text must be nonempty")
        _require('"' not in self.text, "phrase text must not contain a quote")


@dataclass(frozen=True)
class TermGroup:
    """One or more bare words matched together inside one field."""

    terms: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        _require(len(self.terms) > 0, "term group must have at least one term")
        for term in self.terms:
            _validate_term(term)


@dataclass(frozen=True)
class BareTerm:
    word: str

    def __post_init__(self):
        _validate_term(self.word)


@dataclass(frozen=True)
class YearExact:
    year: int

    def __post_init__(self):
        _require(1000 <= self.year <= 9999, "year must be in 1000..9999")


FieldValue = Union[Phrase, TermGroup, BareTerm, YearExact]


def _validate_term(term: str) -> None:
    _require(isinstance(term, str) and WORD_RE.fullmatch(term) is not None,
             f"term must match {WORD_RE.pattern}: {term!r}")
    _require(term not in RESERVED_WORDS, f"term must not be a reserved word: {term!r}")


@dataclass(frozen=True)
class FieldTerm:
    field: str
    value: FieldValue

    def __post_init__(self):
        _require(FIELD_NAME_RE.fullmatch(self.field) is not None,
                 f"field name must match {FIELD_NAME_RE.pattern}: {self.field!r}")
        if self.field == YEAR_FIELD:
            _require(isinstance(self.value, YearExact), "year field takes a YearExact value")
        else:
            _require(isinstance(self.value, (Phrase, TermGroup, BareTerm)),
                     f"field {self.field!r} takes a Phrase, TermGroup, or BareTerm value")


@dataclass(frozen=True)
class And:
    left: "QueryNode"
    right: "QueryNode"

    def __post_init__(self):
        _require(isinstance(self.left, (And, Or, FieldTerm)), "And.left must be a query node")
        _require(isinstance(self.right, (And, Or, FieldTerm)), "And.right must be a query node")


@dataclass(frozen=True)
class Or:
    left: "QueryNode"
    right: "QueryNode"

    def __post_init__(self):
        _require(isinstance(self.left, (And, Or, FieldTerm)), "Or.left must be a query node")
        _require(isinstance(self.right, (And, Or, FieldTerm)), "Or.right must be a query node")


QueryNode = Union[And, Or, FieldTerm]


def validate_fields(fields) -> tuple[str, ...]:
    """Check a field configuration and return it as a tuple."""
    fields = tuple(fields)
    _require(len(fields) > 0, "field configuration must be nonempty")
    for name in fields:
        _require(isinstance(name, str) and FIELD_NAME_RE.fullmatch(name) is not None,
                 f"field name must match {FIELD_NAME_RE.pattern}: {name!r}")
    _require(len(set(fields)) == len(fields), "field names must be unique")
    return fields


class _Parser:
    def __init__(self, text: str, fields: frozenset[str]):
        self.text = text
        self.pos = 0
        self.fields = fields

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in _WS:
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, char: str) -> None:
        if self.peek() != char:
            raise QuerySyntaxError(self.pos, (repr(char),))
        self.pos += 1

    def at_end(self) -> bool:
        return self.pos >= len(self.text)

    def expr(self) -> QueryNode:
        if self.peek() == "(":
            self.pos += 1
            self.skip_ws()
            left = self.expr()
            self.skip_ws()
            m = _OP_RE.match(self.text, self.pos)
            if m is not None:
                self.pos = m.end()
                self.skip_ws()
                right = self.expr()
                self.skip_ws()
                self.expect(")")
                return (And if m.group(1) == "AND" else Or)(left, right)
            if self.peek() == ")":
                self.pos += 1
                return left
            raise QuerySyntaxError(self.pos, ("')'", "'AND'", "'OR'"))
        return self.fieldterm()

    def fieldterm(self) -> FieldTerm:
        m = FIELD_NAME_RE.match(self.text, self.pos)
        if m is None:
            raise QuerySyntaxError(self.pos, ("'('", "field name"))
        name = m.group(0)
        name_pos = self.pos
        self.pos = m.end()
        self.skip_ws()
        self.expect(":")
        if name not in self.fields:
            raise UnknownFieldError(name, name_pos)
        self.skip_ws()
        return FieldTerm(name, self.year_value() if name == YEAR_FIELD else self.text_value())

    def year_value(self) -> YearExact:
        m = WORD_RE.match(self.text, self.pos)
        if m is None:
            raise IllegalYearValueError(self.peek(), self.pos)
        word = m.group(0)
        if not (len(word) == 4 and word.isdigit() and word[0] != "0"):
            raise IllegalYearValueError(word, self.pos)
        self.pos = m.end()
        return YearExact(int(word))

    def text_value(self) -> FieldValue:
        ch = self.peek()
        if ch == '"':
            closing = self.text.find('"', self.pos + 1)
            if closing == -1:
                raise QuerySyntaxError(len(self.text), ("'\"'",))
            if closing == self.pos + 1:
                raise QuerySyntaxError(self.pos + 1, ("phrase character",))
            phrase = Phrase(self.text[self.pos + 1:closing])
            self.pos = closing + 1
            return phrase
        if ch == "(":
            self.pos += 1
            terms = []
            while True:
                self.skip_ws()
                if terms and self.peek() == ")":
                    self.pos += 1
                    return TermGroup(tuple(terms))
                terms.append(self.term())
        return BareTerm(self.term())

    def term(self) -> str:
        m = WORD_RE.match(self.text, self.pos)
        if m is None:
            raise QuerySyntaxError(self.pos, ("term",))
        word = m.group(0)
        if word in RESERVED_WORDS:
            raise QuerySyntaxError(self.pos, ("term other than AND/OR",))
        self.pos = m.end()
        return word


def parse(text: str, fields=DEFAULT_FIELDS) -> QueryNode:
    """Parse a query string into an AST.

    Raises EmptyInputError, QuerySyntaxError, UnknownFieldError, or
    IllegalYearValueError. Whitespace between tokens is tolerated;
    reserved words are uppercase-only.
    """
    field_set = frozenset(validate_fields(fields))
    if text.strip() == "":
        raise EmptyInputError()
    parser = _Parser(text, field_set)
    parser.skip_ws()
    node = parser.expr()
    parser.skip_ws()
    if not parser.at_end():
        raise QuerySyntaxError(parser.pos, ("end of input",))
    return node


def _serialize_value(value: FieldValue) -> str:
    if isinstance(value, Phrase):
        return f'"{value.text}"'
    if isinstance(value, TermGroup):
        return "(" + " ".join(value.terms) + ")"
    if isinstance(value, BareTerm):
        return value.word
    if isinstance(value, YearExact):
        return str(value.year)
    raise TypeError(f"not a field value: {value!r}")


def serialize(node: QueryNode) -> str:
    """Render the canonical string form; total on valid ASTs."""
    if isinstance(node, FieldTerm):
        return f"({node.field}:{_serialize_value(node.value)})"
    if isinstance(node, And):
        return f"({serialize(node.left)} AND {serialize(node.right)})"
    if isinstance(node, Or):
        return f"({serialize(node.left)} OR {serialize(node.right)})"
    raise TypeError(f"not a query node: {node!r}")
