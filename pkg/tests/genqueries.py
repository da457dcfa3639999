"""Seeded random query-AST generator for round-trip properties."""

import random
import string

from litrag.query_ast import (
    And,
    BareTerm,
    FieldTerm,
    Or,
    Phrase,
    RESERVED_WORDS,
    TermGroup,
    YEAR_FIELD,
    YearExact,
)

WORD_CHARS = string.ascii_letters + string.digits + "_-"
# phrase text may hold anything but the quote, including whitespace,
# parens, reserved words, and non-ASCII
PHRASE_CHARS = (
    string.ascii_letters + string.digits + " ,.:()-[]{}'&/\n\t"
    + "éüπЖ星"
)


def gen_word(rng: random.Random) -> str:
    while True:
        n = rng.randint(1, 10)
        word = "".join(rng.choice(WORD_CHARS) for _ in range(n))
        if word not in RESERVED_WORDS:
            return word


def gen_phrase(rng: random.Random) -> Phrase:
    n = rng.randint(1, 30)
    text = "".join(rng.choice(PHRASE_CHARS) for _ in range(n))
    return Phrase(text)


def gen_value(rng: random.Random):
    pick = rng.random()
    if pick < 0.35:
        return gen_phrase(rng)
    if pick < 0.65:
        return TermGroup(tuple(gen_word(rng) for _ in range(rng.randint(1, 4))))
    return BareTerm(gen_word(rng))


def gen_fieldterm(rng: random.Random, fields) -> FieldTerm:
    field = rng.choice(fields)
    if field == YEAR_FIELD:
        return FieldTerm(field, YearExact(rng.randint(1000, 9999)))
    return FieldTerm(field, gen_value(rng))


def gen_ast(rng: random.Random, fields=("author", "abs", "year"), max_depth: int = 4):
    if max_depth <= 0 or rng.random() < 0.4:
        return gen_fieldterm(rng, fields)
    combinator = And if rng.random() < 0.5 else Or
    return combinator(
        gen_ast(rng, fields, max_depth - 1),
        gen_ast(rng, fields, max_depth - 1),
    )
