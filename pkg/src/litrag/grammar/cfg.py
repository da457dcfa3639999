"""Byte-level context-free grammar for canonical query strings.

The grammar is epsilon-free and every nonterminal is productive and
reachable (validated at build time), which gives the recognizer the
property that a prefix is viable exactly when its last chart column is
nonempty.

Terminals are byte classes (sets of byte values). Right-hand sides mix
byte classes and nonterminals; a symbol value below ``n_classes`` is a
terminal class index, anything else is ``n_classes + nonterminal``.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass
from functools import lru_cache

from litrag.query_ast import RESERVED_WORDS, YEAR_FIELD, validate_fields

WORD_BYTES = bytes(sorted(
    set(range(ord("A"), ord("Z") + 1))
    | set(range(ord("a"), ord("z") + 1))
    | set(range(ord("0"), ord("9") + 1))
    | {ord("_"), ord("-")}
))
# printable ASCII without the quote; DEL and controls excluded
PHRASE_ASCII = bytes(b for b in range(0x20, 0x7F) if b != ord('"'))
DIGITS = bytes(range(ord("0"), ord("9") + 1))
NONZERO_DIGITS = DIGITS[1:]


@dataclass(frozen=True)
class Cfg:
    classes: tuple[frozenset, ...]
    productions: tuple[tuple[int, tuple[int, ...]], ...]
    start: int
    nt_names: tuple[str, ...]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def n_nonterminals(self) -> int:
        return len(self.nt_names)


class _Builder:
    def __init__(self):
        self._classes: list[frozenset] = []
        self._class_ids: dict[frozenset, int] = {}
        self._nt_names: list[str] = []
        self._nt_ids: dict[str, int] = {}
        self._prods: list[tuple[int, tuple]] = []

    def cls(self, byte_values) -> tuple:
        key = frozenset(byte_values)
        if not key:
            raise ValueError("empty byte class")
        if key not in self._class_ids:
            self._class_ids[key] = len(self._classes)
            self._classes.append(key)
        return ("t", self._class_ids[key])

    def lit(self, text: str) -> list[tuple]:
        return [self.cls((b,)) for b in text.encode("utf-8")]

    def nt(self, name: str) -> tuple:
        if name not in self._nt_ids:
            self._nt_ids[name] = len(self._nt_names)
            self._nt_names.append(name)
        return ("n", self._nt_ids[name])

    def add(self, lhs: tuple, rhs) -> None:
        if lhs[0] != "n":
            raise ValueError("lhs must be a nonterminal")
        rhs = tuple(rhs)
        if not rhs:
            raise ValueError("epsilon productions are not allowed")
        self._prods.append((lhs[1], rhs))

    def build(self, start: tuple) -> Cfg:
        n_classes = len(self._classes)
        prods = tuple(
            (lhs, tuple(i if kind == "t" else n_classes + i for kind, i in rhs))
            for lhs, rhs in self._prods
        )
        cfg = Cfg(tuple(self._classes), prods, start[1], tuple(self._nt_names))
        _check_sane(cfg)
        return cfg


def _check_sane(cfg: Cfg) -> None:
    n_classes = cfg.n_classes
    n_nts = cfg.n_nonterminals
    productive = [False] * n_nts
    changed = True
    while changed:
        changed = False
        for lhs, rhs in cfg.productions:
            if not productive[lhs] and all(s < n_classes or productive[s - n_classes] for s in rhs):
                productive[lhs] = True
                changed = True
    if not all(productive):
        bad = [cfg.nt_names[i] for i in range(n_nts) if not productive[i]]
        raise ValueError(f"unproductive nonterminals: {bad}")
    reachable = [False] * n_nts
    stack = [cfg.start]
    reachable[cfg.start] = True
    while stack:
        nt = stack.pop()
        for lhs, rhs in cfg.productions:
            if lhs != nt:
                continue
            for s in rhs:
                if s >= n_classes and not reachable[s - n_classes]:
                    reachable[s - n_classes] = True
                    stack.append(s - n_classes)
    if not all(reachable):
        bad = [cfg.nt_names[i] for i in range(n_nts) if not reachable[i]]
        raise ValueError(f"unreachable nonterminals: {bad}")


def _word_nonterminal(b: _Builder, prefix: str, charset: bytes, max_len) -> tuple:
    """Right-linear productions for words over ``charset`` excluding
    the exact reserved words, optionally length-bounded."""
    char_ints = set(charset)
    prefixes = {""}
    for word in RESERVED_WORDS:
        for i in range(1, len(word) + 1):
            part = word[:i]
            if all(ord(c) in char_ints for c in part):
                prefixes.add(part)

    def accepting(state: str | None) -> bool:
        if state is None:  # sink: some word not matching any reserved prefix
            return True
        return state != "" and state not in RESERVED_WORDS

    def state_nt(state: str | None, used: int) -> tuple:
        tag = "sink" if state is None else f"p{state}"
        return b.nt(f"{prefix}:{tag}:{used}")

    def transitions(state: str | None):
        """Byte-class transitions out of a state, grouped by target."""
        if state is None:
            yield char_ints, None
            return
        child_bytes = set()
        for c in sorted(char_ints):
            nxt = state + chr(c)
            if nxt in prefixes:
                yield {c}, nxt
                child_bytes.add(c)
        rest = char_ints - child_bytes
        if rest:
            yield rest, None

    root = state_nt("", 0)
    seen = set()
    stack = [("", 0)]
    while stack:
        state, used = stack.pop()
        if (state, used) in seen:
            continue
        seen.add((state, used))
        lhs = state_nt(state, used)
        for byte_class, target in transitions(state):
            sym = b.cls(byte_class)
            if accepting(target):
                b.add(lhs, [sym])
            if max_len is None:
                b.add(lhs, [sym, state_nt(target, 0)])
                if (target, 0) not in seen:
                    stack.append((target, 0))
            elif used + 1 < max_len:
                b.add(lhs, [sym, state_nt(target, used + 1)])
                if (target, used + 1) not in seen:
                    stack.append((target, used + 1))
    return root


def _phrase_char(b: _Builder, phrase_ascii: bytes, allow_utf8: bool) -> tuple:
    pch = b.nt("PCHAR")
    b.add(pch, [b.cls(phrase_ascii)])
    if allow_utf8:
        cont = b.cls(range(0x80, 0xC0))
        b.add(pch, [b.cls(range(0xC2, 0xE0)), cont])
        b.add(pch, [b.cls((0xE0,)), b.cls(range(0xA0, 0xC0)), cont])
        b.add(pch, [b.cls(range(0xE1, 0xED)), cont, cont])
        b.add(pch, [b.cls((0xED,)), b.cls(range(0x80, 0xA0)), cont])
        b.add(pch, [b.cls(range(0xEE, 0xF0)), cont, cont])
        b.add(pch, [b.cls((0xF0,)), b.cls(range(0x90, 0xC0)), cont, cont])
        b.add(pch, [b.cls(range(0xF1, 0xF4)), cont, cont, cont])
        b.add(pch, [b.cls((0xF4,)), b.cls(range(0x80, 0x90)), cont, cont])
    return pch


def _repeat(b: _Builder, name: str, unit: tuple, separator, max_count) -> tuple:
    """name -> unit | unit sep name, optionally count-bounded."""
    sep = list(separator)
    if max_count is None:
        top = b.nt(name)
        b.add(top, [unit])
        b.add(top, [unit, *sep, top])
        return top
    levels = [b.nt(f"{name}:1")]
    b.add(levels[0], [unit])
    for j in range(2, max_count + 1):
        level = b.nt(f"{name}:{j}")
        b.add(level, [unit])
        b.add(level, [unit, *sep, levels[-1]])
        levels.append(level)
    return levels[-1]


@lru_cache(maxsize=32)
def query_grammar(
    fields=("author", "abs", "year"),
    *,
    max_depth=None,
    term_bytes: bytes | None = None,
    phrase_bytes: bytes | None = None,
    allow_utf8: bool = True,
    max_term_len=None,
    max_group_terms=None,
    max_phrase_len=None,
) -> Cfg:
    """Grammar for canonical query strings over a field configuration.

    The keyword arguments shrink the language (smaller alphabets,
    bounded lengths and nesting); all default to the full language.
    """
    fields = validate_fields(fields)
    b = _Builder()
    lp, rp = b.cls((ord("("),)), b.cls((ord(")"),))
    colon = b.cls((ord(":"),))
    dq = b.cls((ord('"'),))
    sp = b.cls((ord(" "),))

    term = _word_nonterminal(b, "TERM", term_bytes or WORD_BYTES, max_term_len)

    pch = _phrase_char(b, phrase_bytes or PHRASE_ASCII, allow_utf8)
    pbody = _repeat(b, "PBODY", pch, [], max_phrase_len)
    phrase = b.nt("PHRASE")
    b.add(phrase, [dq, pbody, dq])

    terms = _repeat(b, "TERMS", term, [sp], max_group_terms)
    group = b.nt("GROUP")
    b.add(group, [lp, terms, rp])

    if YEAR_FIELD in fields:
        year = b.nt("YEAR")
        b.add(year, [b.cls(NONZERO_DIGITS), b.cls(DIGITS), b.cls(DIGITS), b.cls(DIGITS)])
    else:
        year = None

    text_value = b.nt("VALUE")
    b.add(text_value, [phrase])
    b.add(text_value, [group])
    b.add(text_value, [term])

    fieldterms = []
    for field in fields:
        ft = b.nt(f"FT:{field}")
        value = year if field == YEAR_FIELD else text_value
        b.add(ft, [*b.lit(field), colon, value])
        b.add(ft, [lp, *b.lit(field), colon, value, rp])
        fieldterms.append(ft)

    boolop = b.nt("BOOLOP")
    b.add(boolop, b.lit("AND"))
    b.add(boolop, b.lit("OR"))

    def expr_level(name: str, inner) -> tuple:
        level = b.nt(name)
        for ft in fieldterms:
            b.add(level, [ft])
        if inner is not None:
            b.add(level, [lp, inner, rp])
            b.add(level, [lp, inner, sp, boolop, sp, inner, rp])
        return level

    if max_depth is None:
        expr = b.nt("EXPR")
        for ft in fieldterms:
            b.add(expr, [ft])
        b.add(expr, [lp, expr, rp])
        b.add(expr, [lp, expr, sp, boolop, sp, expr, rp])
    else:
        expr = expr_level("EXPR:0", None)
        for depth in range(1, max_depth + 1):
            expr = expr_level(f"EXPR:{depth}", expr)

    start = b.nt("S")
    b.add(start, [expr])
    return b.build(start)


@dataclass(frozen=True)
class GrammarTables:
    """Kernel-ready flattened form of a Cfg (plus start augmentation)."""

    n_classes: int
    n_nonterminals: int
    class_table: bytes          # n_classes * 256 membership flags
    prod_lhs: array
    rhs_off: array              # len n_productions + 1
    rhs_flat: array             # symbol encoding as in Cfg
    nt_prods_off: array         # len n_nonterminals + 1
    nt_prods_flat: array
    start_prod: int


@lru_cache(maxsize=32)
def compile_tables(cfg: Cfg) -> GrammarTables:
    n_classes = cfg.n_classes
    n_nts = cfg.n_nonterminals + 1  # augmented start
    aug_start = cfg.n_nonterminals
    prods = list(cfg.productions) + [(aug_start, (n_classes + cfg.start,))]
    start_prod = len(prods) - 1
    longest_rhs = max(len(rhs) for _, rhs in prods)
    if longest_rhs > 255:
        # kernels pack the dot position into 8 bits
        raise ValueError(f"production right-hand side too long: {longest_rhs}")

    table = bytearray(n_classes * 256)
    for ci, byte_class in enumerate(cfg.classes):
        base = ci << 8
        for byte in byte_class:
            table[base | byte] = 1

    prod_lhs = array("i", (lhs for lhs, _ in prods))
    rhs_off = array("i", [0])
    rhs_flat = array("i")
    for _, rhs in prods:
        rhs_flat.extend(rhs)
        rhs_off.append(len(rhs_flat))

    by_lhs: list[list[int]] = [[] for _ in range(n_nts)]
    for pid, (lhs, _) in enumerate(prods):
        by_lhs[lhs].append(pid)
    nt_prods_off = array("i", [0])
    nt_prods_flat = array("i")
    for pids in by_lhs:
        nt_prods_flat.extend(pids)
        nt_prods_off.append(len(nt_prods_flat))

    return GrammarTables(
        n_classes=n_classes,
        n_nonterminals=n_nts,
        class_table=bytes(table),
        prod_lhs=prod_lhs,
        rhs_off=rhs_off,
        rhs_flat=rhs_flat,
        nt_prods_off=nt_prods_off,
        nt_prods_flat=nt_prods_flat,
        start_prod=start_prod,
    )
