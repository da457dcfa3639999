"""Exact k-nearest-neighbor vector index over embedded chunks.

The store keeps unit-norm float32 vectors plus chunk metadata in
memory, answers cosine top-k queries by exhaustive scan (the
correctness baseline at desk scale — approximate indexes are a
non-goal), and persists to a checksummed binary file.

Scoring is done in float64 regardless of the float32 storage dtype so
results are stable and ties are exact; ties are broken by ascending
``chunk_id`` for full determinism.  Concurrency follows a
reader-writer discipline: many simultaneous queries or one upsert,
with each upsert batch atomic with respect to queries.
"""
from __future__ import annotations

import os
import struct
import threading
import zlib
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .chunker import Chunk
from .errors import DimensionMismatchError

__all__ = [
    "EmbeddedChunk",
    "ScoredChunk",
    "UpsertResult",
    "DuplicateWithinBatchError",
    "CorruptIndexError",
    "VectorStore",
]

_MAGIC = b"LRAGIDX1"


class DuplicateWithinBatchError(ValueError):
    """The same chunk_id appears twice in a single upsert batch."""

    def __init__(self, chunk_id: str) -> None:
        super().__init__(f"chunk_id {chunk_id!r} appears twice in one batch")
        self.chunk_id = chunk_id


class CorruptIndexError(ValueError):
    """An index file failed its magic, checksum, or structure checks."""

    def __init__(self, reason: str) -> None:
        super().__init__(f"corrupt index file: {reason}")
        self.reason = reason


@dataclass(frozen=True)
class EmbeddedChunk:
    """A chunk paired with its embedding and its document's title."""

    chunk: Chunk
    vector: np.ndarray
    doc_title: str


@dataclass(frozen=True)
class ScoredChunk:
    """One k-NN result: chunk identity, text, and cosine score."""

    chunk_id: str
    doc_id: str
    text: str
    doc_title: str
    score: float


@dataclass(frozen=True)
class UpsertResult:
    inserted: int
    replaced: int


class _RWLock:
    """Readers-preference reader-writer lock."""

    def __init__(self) -> None:
        self._mutex = threading.Lock()
        self._writer = threading.Lock()
        self._readers = 0

    @contextmanager
    def read(self):
        with self._mutex:
            self._readers += 1
            if self._readers == 1:
                self._writer.acquire()
        try:
            yield
        finally:
            with self._mutex:
                self._readers -= 1
                if self._readers == 0:
                    self._writer.release()

    @contextmanager
    def write(self):
        with self._writer:
            yield


class VectorStore:
    """In-memory exact-cosine index keyed by chunk_id."""

    def __init__(self, dim: int) -> None:
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._lock = _RWLock()
        self._matrix = np.zeros((0, dim), dtype=np.float32)
        self._chunk_ids: list[str] = []
        self._doc_ids: list[str] = []
        self._doc_titles: list[str] = []
        self._texts: list[str] = []
        self._row_of: dict[str, int] = {}
        # Derived arrays, rebuilt lazily after writes: a float64 copy of
        # the matrix for stable scoring and the rank of each row's
        # chunk_id in sorted order for tie-breaking.
        self._matrix64: np.ndarray | None = None
        self._id_ranks: np.ndarray | None = None

    def __len__(self) -> int:
        with self._lock.read():
            return len(self._chunk_ids)

    def _check_vector(self, vec: np.ndarray) -> np.ndarray:
        arr = np.asarray(vec, dtype=np.float32)
        if arr.ndim != 1 or arr.shape[0] != self.dim:
            got = arr.shape[0] if arr.ndim == 1 else -1
            raise DimensionMismatchError(self.dim, int(got))
        return arr

    def upsert(self, records: list[EmbeddedChunk]) -> UpsertResult:
        vectors = []
        seen: set[str] = set()
        for record in records:
            if record.chunk.chunk_id in seen:
                raise DuplicateWithinBatchError(record.chunk.chunk_id)
            seen.add(record.chunk.chunk_id)
            vectors.append(self._check_vector(record.vector))
        with self._lock.write():
            inserted = replaced = 0
            new_rows: list[EmbeddedChunk] = []
            new_vecs: list[np.ndarray] = []
            for record, vec in zip(records, vectors):
                row = self._row_of.get(record.chunk.chunk_id)
                if row is None:
                    inserted += 1
                    new_rows.append(record)
                    new_vecs.append(vec)
                else:
                    replaced += 1
                    self._matrix[row] = vec
                    self._doc_ids[row] = record.chunk.doc_id
                    self._doc_titles[row] = record.doc_title
                    self._texts[row] = record.chunk.text
            if new_rows:
                base = len(self._chunk_ids)
                self._matrix = np.vstack(
                    [self._matrix, np.stack(new_vecs)]
                )
                for offset, record in enumerate(new_rows):
                    self._row_of[record.chunk.chunk_id] = base + offset
                    self._chunk_ids.append(record.chunk.chunk_id)
                    self._doc_ids.append(record.chunk.doc_id)
                    self._doc_titles.append(record.doc_title)
                    self._texts.append(record.chunk.text)
            self._matrix64 = None
            self._id_ranks = None
            return UpsertResult(inserted=inserted, replaced=replaced)

    def _scoring_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        # Called under the read lock.  The rebuild races benignly: every
        # thread computes the same arrays from the same frozen state.
        if self._matrix64 is None:
            self._matrix64 = self._matrix.astype(np.float64)
        if self._id_ranks is None:
            ranks = np.empty(len(self._chunk_ids), dtype=np.int64)
            ranks[np.argsort(np.asarray(self._chunk_ids, dtype=object))] = (
                np.arange(len(self._chunk_ids))
            )
            self._id_ranks = ranks
        return self._matrix64, self._id_ranks

    def knn(
        self,
        query: np.ndarray,
        k: int,
        filter: set[str] | None = None,
    ) -> list[ScoredChunk]:
        if k < 1:
            raise ValueError("k must be at least 1")
        q = np.asarray(query, dtype=np.float64)
        if q.ndim != 1 or q.shape[0] != self.dim:
            got = q.shape[0] if q.ndim == 1 else -1
            raise DimensionMismatchError(self.dim, int(got))
        with self._lock.read():
            if not self._chunk_ids:
                return []
            matrix64, id_ranks = self._scoring_arrays()
            if filter is not None:
                rows = np.asarray(
                    [
                        i
                        for i, doc_id in enumerate(self._doc_ids)
                        if doc_id in filter
                    ],
                    dtype=np.int64,
                )
                if rows.size == 0:
                    return []
                scores = matrix64[rows] @ q
                ranks = id_ranks[rows]
            else:
                rows = None
                scores = matrix64 @ q
                ranks = id_ranks
            # Sort by descending score, then ascending chunk_id rank.
            order = np.lexsort((ranks, -scores))[:k]
            if rows is not None:
                picked = rows[order]
            else:
                picked = order
            return [
                ScoredChunk(
                    chunk_id=self._chunk_ids[i],
                    doc_id=self._doc_ids[i],
                    text=self._texts[i],
                    doc_title=self._doc_titles[i],
                    score=float(scores[j]),
                )
                for j, i in zip(order, picked)
            ]

    def save(self, path: str) -> None:
        with self._lock.read():
            parts = [
                _MAGIC,
                struct.pack("<I", self.dim),
                struct.pack("<Q", len(self._chunk_ids)),
            ]
            for i, chunk_id in enumerate(self._chunk_ids):
                for text in (
                    chunk_id,
                    self._doc_ids[i],
                    self._doc_titles[i],
                    self._texts[i],
                ):
                    raw = text.encode("utf-8")
                    parts.append(struct.pack("<I", len(raw)))
                    parts.append(raw)
                parts.append(
                    np.ascontiguousarray(
                        self._matrix[i], dtype="<f4"
                    ).tobytes()
                )
            body = b"".join(parts)
        payload = body + struct.pack("<I", zlib.crc32(body))
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "VectorStore":
        with open(path, "rb") as fh:
            blob = fh.read()
        if len(blob) < len(_MAGIC) + 4 + 8 + 4:
            raise CorruptIndexError("file shorter than minimal header")
        if blob[: len(_MAGIC)] != _MAGIC:
            raise CorruptIndexError("bad magic bytes")
        body, footer = blob[:-4], blob[-4:]
        if struct.unpack("<I", footer)[0] != zlib.crc32(body):
            raise CorruptIndexError("checksum mismatch")
        offset = len(_MAGIC)
        (dim,) = struct.unpack_from("<I", body, offset)
        offset += 4
        (count,) = struct.unpack_from("<Q", body, offset)
        offset += 8
        if dim == 0:
            raise CorruptIndexError("dimension header is zero")

        def read_str() -> str:
            nonlocal offset
            if offset + 4 > len(body):
                raise CorruptIndexError("truncated string length")
            (n,) = struct.unpack_from("<I", body, offset)
            offset += 4
            if offset + n > len(body):
                raise CorruptIndexError("string data out of bounds")
            try:
                text = body[offset:offset + n].decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CorruptIndexError(f"invalid UTF-8 string: {exc}") from exc
            offset += n
            return text

        store = cls(dim)
        vec_bytes = dim * 4
        if count * (16 + vec_bytes) > len(body) - offset:
            raise CorruptIndexError("record count exceeds file size")
        vectors = np.empty((count, dim), dtype=np.float32)
        for row in range(count):
            chunk_id = read_str()
            doc_id = read_str()
            doc_title = read_str()
            text = read_str()
            if offset + vec_bytes > len(body):
                raise CorruptIndexError("vector data out of bounds")
            vectors[row] = np.frombuffer(
                body, dtype="<f4", count=dim, offset=offset
            )
            offset += vec_bytes
            if chunk_id in store._row_of:
                raise CorruptIndexError(f"duplicate chunk_id {chunk_id!r}")
            store._row_of[chunk_id] = row
            store._chunk_ids.append(chunk_id)
            store._doc_ids.append(doc_id)
            store._doc_titles.append(doc_title)
            store._texts.append(text)
        if offset != len(body):
            raise CorruptIndexError("trailing bytes after last record")
        if count:
            store._matrix = vectors
        return store
