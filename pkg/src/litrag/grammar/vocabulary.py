"""Token vocabularies: validation, JSONL persistence, byte trie.

A vocabulary is a dense id -> byte-string table plus one distinguished
end-of-sequence id whose text is empty. The JSONL form has one object
per token line, ``{"id": int, "text_b64": str}``, plus exactly one
``{"eos_id": int}`` line declaring the eos token (which never appears
as a token line).
"""

from __future__ import annotations

import base64
import json
from array import array
from dataclasses import dataclass


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[bytes, ...]
    eos_id: int

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ValueError("vocabulary must not be empty")
        if not 0 <= self.eos_id < len(self.tokens):
            raise ValueError(f"eos_id {self.eos_id} out of range")
        for tid, text in enumerate(self.tokens):
            if not isinstance(text, bytes):
                raise ValueError(f"token {tid} text must be bytes")
            if tid == self.eos_id:
                if text != b"":
                    raise ValueError("eos token text must be empty")
            elif text == b"":
                raise ValueError(f"token {tid} has empty text (a zero-length token can never advance decoding)")

    @property
    def size(self) -> int:
        return len(self.tokens)


def vocabulary_from_texts(texts, eos_id: int | None = None) -> Vocabulary:
    """Build a vocabulary from token texts (str or bytes); when
    ``eos_id`` is None the eos token is appended at the end."""
    tokens = [t.encode("utf-8") if isinstance(t, str) else bytes(t) for t in texts]
    if eos_id is None:
        tokens.append(b"")
        eos_id = len(tokens) - 1
    return Vocabulary(tuple(tokens), eos_id)


def stub_ascii_vocabulary() -> Vocabulary:
    """All printable ASCII characters as single-byte tokens, plus eos."""
    return vocabulary_from_texts([chr(b) for b in range(0x20, 0x7F)])


def save_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for tid, text in enumerate(vocab.tokens):
            if tid == vocab.eos_id:
                continue
            record = {"id": tid, "text_b64": base64.b64encode(text).decode("ascii")}
            f.write(json.dumps(record) + "\n")
        f.write(json.dumps({"eos_id": vocab.eos_id}) + "\n")


def load_vocabulary(path) -> Vocabulary:
    entries: dict[int, bytes] = {}
    eos_id = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: not JSON: {exc}") from exc
            if "eos_id" in record:
                if eos_id is not None:
                    raise ValueError(f"{path}:{lineno}: duplicate eos_id line")
                eos_id = int(record["eos_id"])
            else:
                tid = int(record["id"])
                if tid in entries:
                    raise ValueError(f"{path}:{lineno}: duplicate token id {tid}")
                entries[tid] = base64.b64decode(record["text_b64"])
    if eos_id is None:
        raise ValueError(f"{path}: missing eos_id line")
    if eos_id in entries:
        raise ValueError(f"{path}: eos id {eos_id} also declared as a token")
    entries[eos_id] = b""
    size = len(entries)
    if sorted(entries) != list(range(size)):
        raise ValueError(f"{path}: token ids must be dense in [0, {size})")
    return Vocabulary(tuple(entries[i] for i in range(size)), eos_id)


class TokenTrie:
    """Byte trie over all non-eos token texts, flattened to arrays the
    kernels can walk (children sorted by byte; node 0 is the root)."""

    __slots__ = ("n_nodes", "child_off", "child_byte", "child_node", "tok_off", "tok_ids")

    def __init__(self, vocab: Vocabulary):
        children: list[dict[int, int]] = [{}]
        ends: list[list[int]] = [[]]
        for tid, text in enumerate(vocab.tokens):
            if tid == vocab.eos_id:
                continue
            node = 0
            for byte in text:
                nxt = children[node].get(byte)
                if nxt is None:
                    nxt = len(children)
                    children[node][byte] = nxt
                    children.append({})
                    ends.append([])
                node = nxt
            ends[node].append(tid)

        self.n_nodes = len(children)
        child_off = array("i", [0])
        child_byte = bytearray()
        child_node = array("i")
        tok_off = array("i", [0])
        tok_ids = array("i")
        for node in range(self.n_nodes):
            for byte in sorted(children[node]):
                child_byte.append(byte)
                child_node.append(children[node][byte])
            child_off.append(len(child_node))
            tok_ids.extend(ends[node])
            tok_off.append(len(tok_ids))
        self.child_off = child_off
        self.child_byte = bytes(child_byte)
        self.child_node = child_node
        self.tok_off = tok_off
        self.tok_ids = tok_ids
