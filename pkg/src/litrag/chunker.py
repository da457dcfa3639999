"""Document normalization and paragraph-first chunking.

Bodies are normalized (CRLF to LF, per-line trailing whitespace
stripped, runs of blank lines collapsed to one, blank edges trimmed)
and split on blank lines. Paragraphs longer than ``max_chars`` are cut
at the last sentence boundary that fits; pieces shorter than
``min_chars`` merge into what follows while the merge stays within
``max_chars``. Chunk spans index into the normalized body, so the body
is exactly the chunk texts joined with the inter-chunk gaps.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

DEFAULT_MAX_CHARS = 1200
DEFAULT_MIN_CHARS = 120

_SENTENCE_BOUNDARY = re.compile(r"[.?!] ")


@dataclass(frozen=True)
class SourceDocument:
    doc_id: str
    title: str
    body: str

    def __post_init__(self):
        if not self.doc_id or not isinstance(self.doc_id, str):
            raise ValueError("doc_id must be a nonempty string")


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    ordinal: int
    text: str
    char_span: tuple[int, int]


def normalize(text: str) -> str:
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    lines = [line.rstrip() for line in text.split("\n")]
    text = "\n".join(lines)
    text = re.sub(r"\n{3,}", "\n\n", text)
    return text.strip("\n")


def _split_long_paragraph(body: str, start: int, end: int, max_chars: int):
    """Spans of sentence-boundary pieces, each at most max_chars."""
    spans = []
    pos = start
    while end - pos > max_chars:
        window = body[pos:pos + max_chars + 1]
        cut = -1
        for match in _SENTENCE_BOUNDARY.finditer(window):
            cut = match.start()
        if cut >= 0:
            piece_end = pos + cut + 1  # keep the punctuation
            spans.append((pos, piece_end))
            pos = piece_end + 1
            while pos < end and body[pos] == " ":
                pos += 1
        else:
            spans.append((pos, pos + max_chars))
            pos += max_chars
    if pos < end:
        spans.append((pos, end))
    return spans


def chunk_document(
    doc: SourceDocument,
    *,
    max_chars: int = DEFAULT_MAX_CHARS,
    min_chars: int = DEFAULT_MIN_CHARS,
) -> list[Chunk]:
    """Deterministically chunk one document; [] for an empty body."""
    if not max_chars > min_chars > 0:
        raise ValueError("need max_chars > min_chars > 0")
    body = normalize(doc.body)
    if not body:
        return []

    spans = []
    offset = 0
    for paragraph in body.split("\n\n"):
        if paragraph:
            spans.extend(_split_long_paragraph(body, offset, offset + len(paragraph), max_chars))
        offset += len(paragraph) + 2

    merged = []
    i = 0
    while i < len(spans):
        start, end = spans[i]
        while (
            end - start < min_chars
            and i + 1 < len(spans)
            and spans[i + 1][1] - start <= max_chars
        ):
            i += 1
            end = spans[i][1]
        merged.append((start, end))
        i += 1

    return [
        Chunk(
            chunk_id=f"{doc.doc_id}#{ordinal}",
            doc_id=doc.doc_id,
            ordinal=ordinal,
            text=body[start:end],
            char_span=(start, end),
        )
        for ordinal, (start, end) in enumerate(merged)
    ]
