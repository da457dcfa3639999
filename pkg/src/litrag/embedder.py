"""Text embedding backends producing unit-norm float32 vectors.

Two interchangeable kinds:

* ``deterministic`` — a self-contained feature-hashing embedder.  It
  needs no network or model weights, is bit-for-bit reproducible
  across platforms, and gives related texts related vectors (shared
  words and character 3-grams land in shared buckets).  It is the
  default for development and tests.
* ``remote`` — a thin HTTP client for an external embedding service
  speaking the common ``{"model", "input"}`` →
  ``{"data": [{"index", "embedding"}]}`` wire shape.

Both expose ``embed_batch(texts) -> np.ndarray`` of shape
``(len(texts), dim)`` plus a ``dim`` attribute, which is all the
vector store and retriever rely on.
"""
from __future__ import annotations

import hashlib
import os
import re
import threading
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError

__all__ = [
    "DEFAULT_DIM",
    "MAX_BATCH_TEXTS",
    "EmbedderConfig",
    "EmptyTextError",
    "ZeroVectorError",
    "RemoteUnavailableError",
    "DeterministicEmbedder",
    "RemoteEmbedder",
    "build_embedder",
    "embed_batch",
    "normalize",
]

DEFAULT_DIM = 384

#: Upper bound on one ``embed_batch()`` call; callers split larger loads.
MAX_BATCH_TEXTS = 10_000

#: Hash personalisation pins the feature→bucket mapping.  Changing it
#: (or anything else in the hashing scheme) silently invalidates every
#: stored vector, so the scheme is versioned: bump the suffix on any
#: change and re-embed existing indexes.
_HASH_PERSON = b"litrag-fh1"

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EmptyTextError(ValueError):
    """A text in the batch has no embeddable content."""

    def __init__(self, index: int) -> None:
        super().__init__(f"text at index {index} has no embeddable content")
        self.index = index


class ZeroVectorError(ValueError):
    """A vector with zero norm cannot be normalised."""


class RemoteUnavailableError(RuntimeError):
    """The remote embedding service failed or answered malformed data."""


@dataclass(frozen=True)
class EmbedderConfig:
    """How to construct an embedder.

    ``kind`` is ``"deterministic"`` or ``"remote"``; ``endpoint_url``,
    ``model_name``, ``batch_size``, ``timeout`` and ``max_inflight``
    only matter for the remote kind.
    """

    kind: str = "deterministic"
    endpoint_url: str = ""
    model_name: str = ""
    dim: int = DEFAULT_DIM
    batch_size: int = 64
    timeout: float = 30.0
    max_inflight: int = 4

    def __post_init__(self) -> None:
        if self.kind not in ("deterministic", "remote"):
            raise ValueError(f"unknown embedder kind: {self.kind!r}")
        if self.dim < 8:
            raise ValueError("dim must be at least 8")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.kind == "remote" and not self.endpoint_url:
            raise ValueError("remote kind requires endpoint_url")


def normalize(vec: np.ndarray) -> np.ndarray:
    """Return ``vec`` scaled to unit L2 norm, as float32.

    Raises :class:`ZeroVectorError` for the all-zero vector, which has
    no direction and would poison cosine scores with NaNs.
    """
    arr = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ZeroVectorError("cannot normalise a zero vector")
    return (arr / norm).astype(np.float32)


def _features(text: str) -> list[str]:
    """Lowercased word tokens plus their character 3-grams."""
    feats: list[str] = []
    for word in _TOKEN_RE.findall(text.lower()):
        feats.append(word)
        for i in range(len(word) - 2):
            feats.append(word[i:i + 3])
    return feats


def _hash_feature(feature: str) -> tuple[int, float]:
    """Map a feature string to (64-bit hash, ±1 sign).

    Callers reduce the hash modulo their dimension for the bucket; the
    top bit supplies the sign, keeping the expected dot product of
    unrelated texts near zero.
    """
    digest = hashlib.blake2b(
        feature.encode("utf-8"), digest_size=8, person=_HASH_PERSON
    ).digest()
    h64 = int.from_bytes(digest, "little")
    sign = 1.0 if (h64 >> 63) == 0 else -1.0
    return h64, sign


def _check_batch(texts: list[str]) -> None:
    if len(texts) > MAX_BATCH_TEXTS:
        raise ValueError(
            f"batch of {len(texts)} exceeds limit of {MAX_BATCH_TEXTS}"
        )
    for index, text in enumerate(texts):
        if not text:
            raise EmptyTextError(index)


class DeterministicEmbedder:
    """Feature-hashing embedder with a frozen, versioned scheme.

    Pipeline per text: lowercase, extract ``[a-z0-9]+`` tokens, emit
    each token and each of its character 3-grams as features, hash
    each feature with personalised BLAKE2b into one of ``dim`` signed
    buckets, accumulate in float64, then L2-normalise to float32.
    """

    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        if dim < 8:
            raise ValueError("dim must be at least 8")
        self.dim = dim

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        _check_batch(texts)
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            feats = _features(text)
            if not feats:
                raise EmptyTextError(row)
            acc = np.zeros(self.dim, dtype=np.float64)
            for feature in feats:
                h64, sign = _hash_feature(feature)
                acc[h64 % self.dim] += sign
            out[row] = normalize(acc)
        return out

    def close(self) -> None:
        pass


class RemoteEmbedder:
    """Client for an external embedding HTTP endpoint.

    POSTs ``{"model": ..., "input": [texts]}`` to ``endpoint_url`` in
    sub-batches of ``batch_size`` and reads back ``{"data":
    [{"index": i, "embedding": [...]}, ...]}``; rows are reordered by
    ``index`` so callers see vectors in input order regardless of
    service ordering.  A bearer token is read from the
    ``LITRAG_EMBED_TOKEN`` environment variable when present.  At most
    ``max_inflight`` requests run concurrently.
    """

    def __init__(
        self,
        endpoint_url: str,
        model_name: str,
        dim: int = DEFAULT_DIM,
        *,
        batch_size: int = 64,
        timeout: float = 30.0,
        max_inflight: int = 4,
        transport=None,
    ) -> None:
        import httpx

        if dim < 8:
            raise ValueError("dim must be at least 8")
        if batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        self.dim = dim
        self.endpoint_url = endpoint_url
        self.model_name = model_name
        self.batch_size = batch_size
        self._sem = threading.Semaphore(max_inflight)
        headers = {}
        token = os.environ.get("LITRAG_EMBED_TOKEN")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            headers=headers, timeout=timeout, transport=transport
        )

    def close(self) -> None:
        self._client.close()

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        _check_batch(texts)
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for lo in range(0, len(texts), self.batch_size):
            sub = texts[lo:lo + self.batch_size]
            out[lo:lo + len(sub)] = self._post_batch(sub)
        return out

    def _post_batch(self, texts: list[str]) -> np.ndarray:
        import httpx

        with self._sem:
            try:
                resp = self._client.post(
                    self.endpoint_url,
                    json={"model": self.model_name, "input": list(texts)},
                )
                resp.raise_for_status()
                payload = resp.json()
            except httpx.HTTPError as exc:
                raise RemoteUnavailableError(
                    f"embedding request failed: {exc}"
                ) from exc
        try:
            rows = payload["data"]
            if len(rows) != len(texts):
                raise RemoteUnavailableError(
                    f"service returned {len(rows)} embeddings "
                    f"for {len(texts)} inputs"
                )
            out = np.zeros((len(texts), self.dim), dtype=np.float32)
            seen = [False] * len(texts)
            for row in rows:
                idx = row["index"]
                if not isinstance(idx, int) or not 0 <= idx < len(texts):
                    raise RemoteUnavailableError(
                        f"embedding index {idx!r} out of range"
                    )
                if seen[idx]:
                    raise RemoteUnavailableError(
                        f"duplicate embedding index {idx}"
                    )
                seen[idx] = True
                vec = np.asarray(row["embedding"], dtype=np.float64)
                if vec.ndim != 1 or vec.shape[0] != self.dim:
                    got = vec.shape[0] if vec.ndim == 1 else -1
                    raise DimensionMismatchError(self.dim, int(got))
                out[idx] = normalize(vec)
        except (KeyError, TypeError) as exc:
            raise RemoteUnavailableError(
                f"malformed embedding response: {exc}"
            ) from exc
        return out


def build_embedder(config: EmbedderConfig):
    """Construct the backend named by ``config.kind``."""
    if config.kind == "deterministic":
        return DeterministicEmbedder(dim=config.dim)
    return RemoteEmbedder(
        config.endpoint_url,
        config.model_name,
        dim=config.dim,
        batch_size=config.batch_size,
        timeout=config.timeout,
        max_inflight=config.max_inflight,
    )


def embed_batch(texts: list[str], config: EmbedderConfig) -> np.ndarray:
    """One-shot convenience: build the configured embedder and run it."""
    embedder = build_embedder(config)
    try:
        return embedder.embed_batch(texts)
    finally:
        embedder.close()
