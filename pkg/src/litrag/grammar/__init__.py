"""Grammar-constrained decoding for the structured query language.

``query_grammar`` builds a byte-level context-free grammar describing
the canonical spelling of the query language (single mandatory spaces,
well-formed UTF-8 in phrases). ``DecodeSession`` tracks a recognizer
chart over emitted bytes and computes, for any token vocabulary, the
exact set of tokens that keep the output a viable prefix of some
complete query.
"""

from .cfg import Cfg, compile_tables, query_grammar
from .engine import (
    BudgetExhaustedError,
    DecodeSession,
    GrammarUnreachableError,
    IllegalTokenError,
    SessionClosedError,
    TokenMask,
    advance,
    allowed_tokens,
    constrained_generate,
    kernel_name,
    new_session,
)
from .vocabulary import (
    TokenTrie,
    Vocabulary,
    load_vocabulary,
    save_vocabulary,
    stub_ascii_vocabulary,
    vocabulary_from_texts,
)

__all__ = [
    "BudgetExhaustedError",
    "Cfg",
    "DecodeSession",
    "GrammarUnreachableError",
    "IllegalTokenError",
    "SessionClosedError",
    "TokenMask",
    "TokenTrie",
    "Vocabulary",
    "advance",
    "allowed_tokens",
    "compile_tables",
    "constrained_generate",
    "kernel_name",
    "load_vocabulary",
    "new_session",
    "query_grammar",
    "save_vocabulary",
    "stub_ascii_vocabulary",
    "vocabulary_from_texts",
]
