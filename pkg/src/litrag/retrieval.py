"""Snippet retrieval: structured search, semantic search, budgeting.

Two routes produce grounding snippets for a question:

* ``search`` — the question is translated into a structured query (via
  the LLM client) and sent to a literature search API; each hit's
  abstract becomes a snippet scored by reciprocal rank.
* ``semantic`` — the question is embedded with the same embedder used
  at ingestion and matched against the local vector index; cosine
  scores carry through.

A third ``hybrid`` route merges both, deduplicating by source.
``budget_snippets`` then fits any snippet list to a token budget with
a chars/4 estimator so the final prompt stays within the model's
context window.
"""
from __future__ import annotations

import os
import threading
from dataclasses import dataclass

from .prompt_builder import Snippet, build_translation_prompt
from .query_ast import DEFAULT_FIELDS, serialize

__all__ = [
    "IndexEmptyError",
    "NoResultsError",
    "RetrievalResult",
    "Retriever",
    "SearchApiClient",
    "SearchApiConfig",
    "SearchApiUnavailableError",
    "budget_snippets",
    "estimate_tokens",
]


class SearchApiUnavailableError(RuntimeError):
    """The literature search API failed or answered malformed data."""


class NoResultsError(RuntimeError):
    """The search returned no usable results for this query."""


class IndexEmptyError(RuntimeError):
    """Semantic retrieval was asked to query an empty index."""


@dataclass(frozen=True)
class SearchApiConfig:
    base_url: str = ""
    auth_token_env: str = "LITRAG_SEARCH_TOKEN"
    rows: int = 5
    default_filters: str = "property:refereed"
    sort: str = "date desc"

    def __post_init__(self) -> None:
        if self.rows < 1:
            raise ValueError("rows must be at least 1")


@dataclass(frozen=True)
class RetrievalResult:
    snippets: tuple[Snippet, ...]
    translated_query: str | None
    backend: str  # "search" | "semantic" | "hybrid"


class SearchApiClient:
    """Minimal literature-search client.

    Wire shape: ``GET {base_url}/search/query`` with parameters ``q``
    (the structured query), ``fl=bibcode,title,abstract``, ``rows``,
    ``sort``, plus ``fq`` carrying the configured default filters (the
    standard place for restrictions like ``property:refereed`` that
    must not perturb relevance ranking).  Bearer token from the
    environment variable named by ``auth_token_env``.  In-flight
    requests are bounded.
    """

    def __init__(
        self,
        config: SearchApiConfig,
        *,
        max_inflight: int = 4,
        timeout: float = 30.0,
        transport=None,
    ) -> None:
        import httpx

        if not config.base_url:
            raise ValueError("search API base_url is required")
        self.config = config
        self._sem = threading.Semaphore(max_inflight)
        headers = {}
        token = os.environ.get(config.auth_token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            base_url=config.base_url,
            headers=headers,
            timeout=timeout,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def search(self, query: str, rows: int) -> list[dict]:
        """Return the raw result docs (bibcode/title/abstract dicts)."""
        import httpx

        params = {
            "q": query,
            "fl": "bibcode,title,abstract",
            "rows": rows,
            "sort": self.config.sort,
        }
        if self.config.default_filters:
            params["fq"] = self.config.default_filters
        with self._sem:
            try:
                resp = self._client.get("/search/query", params=params)
                resp.raise_for_status()
                payload = resp.json()
            except httpx.HTTPError as exc:
                raise SearchApiUnavailableError(
                    f"search request failed: {exc}"
                ) from exc
        try:
            docs = payload["response"]["docs"]
        except (KeyError, TypeError) as exc:
            raise SearchApiUnavailableError(
                f"malformed search response: {exc}"
            ) from exc
        if not isinstance(docs, list):
            raise SearchApiUnavailableError("malformed search response: docs")
        return docs


def estimate_tokens(text: str) -> int:
    """Backend-independent token estimate: one token per 4 characters."""
    return (len(text) + 3) // 4


def _truncate_to_budget(text: str, budget_tokens: int) -> str:
    """Longest prefix within the budget, cut at a word boundary when one
    exists; a single over-long word is hard-cut."""
    window = text[: budget_tokens * 4]
    if len(window) == len(text):
        return text
    cut = window.rfind(" ")
    if cut > 0:
        candidate = window[:cut].rstrip()
        if candidate:
            return candidate
    return window


def budget_snippets(snippets: list[Snippet], max_total_tokens: int) -> list[Snippet]:
    """Greedy highest-score-first selection within a total token budget.

    A snippet is included only if it fits the remaining budget whole —
    except a snippet whose own estimate exceeds the entire budget,
    which is truncated at a word boundary to the remaining budget and
    marked ``truncated``.  The output preserves descending-score order
    and always satisfies the budget.
    """
    if max_total_tokens < 1:
        raise ValueError("max_total_tokens must be at least 1")
    ranked = sorted(
        range(len(snippets)), key=lambda i: (-snippets[i].score, i)
    )
    keep: list[tuple[int, Snippet]] = []
    used = 0
    for i in ranked:
        snippet = snippets[i]
        cost = estimate_tokens(snippet.text)
        if used + cost <= max_total_tokens:
            keep.append((i, snippet))
            used += cost
        elif cost > max_total_tokens:
            remaining = max_total_tokens - used
            if remaining < 1:
                continue
            text = _truncate_to_budget(snippet.text, remaining)
            if not text:
                continue
            keep.append(
                (
                    i,
                    Snippet(
                        text=text,
                        source_id=snippet.source_id,
                        score=snippet.score,
                        origin=snippet.origin,
                        truncated=True,
                    ),
                )
            )
            used += estimate_tokens(text)
    keep.sort(
        key=lambda pair: (-pair[1].score, pair[0])
    )
    return [snippet for _, snippet in keep]


class Retriever:
    """Question → snippets, over a store/embedder and optional search API."""

    def __init__(
        self,
        *,
        store=None,
        embedder=None,
        search_client: SearchApiClient | None = None,
        llm_client=None,
        fields: tuple[str, ...] = DEFAULT_FIELDS,
    ) -> None:
        self.store = store
        self.embedder = embedder
        self.search_client = search_client
        self.llm_client = llm_client
        self.fields = fields

    def translate(self, question: str) -> str:
        """Canonical structured query for ``question``."""
        if self.llm_client is None:
            raise ValueError("no LLM client configured for translation")
        prompt = build_translation_prompt(question, fields=self.fields)
        node = self.llm_client.translate_query(prompt, fields=self.fields)
        return serialize(node)

    def retrieve_search(self, question: str, n: int) -> RetrievalResult:
        if n < 1:
            raise ValueError("n must be at least 1")
        if self.search_client is None:
            raise ValueError("no search API client configured")
        query = self.translate(question)
        docs = self.search_client.search(query, rows=n)
        snippets = []
        for rank, doc in enumerate(docs[:n]):
            abstract = doc.get("abstract")
            if not abstract:
                continue
            snippets.append(
                Snippet(
                    text=abstract,
                    source_id=str(doc.get("bibcode", "")) or f"rank{rank}",
                    score=1.0 / (rank + 1),
                    origin="search",
                )
            )
        if not snippets:
            raise NoResultsError(f"no results with abstracts for {query!r}")
        return RetrievalResult(
            snippets=tuple(snippets), translated_query=query, backend="search"
        )

    def retrieve_semantic(self, question: str, k: int) -> RetrievalResult:
        if k < 1:
            raise ValueError("k must be at least 1")
        if self.store is None or self.embedder is None:
            raise ValueError("semantic retrieval needs a store and an embedder")
        if len(self.store) == 0:
            raise IndexEmptyError("the vector index holds no records")
        vector = self.embedder.embed_batch([question])[0]
        hits = self.store.knn(vector.astype("float64"), k)
        snippets = tuple(
            Snippet(
                text=hit.text,
                source_id=hit.doc_id,
                score=hit.score,
                origin="semantic",
            )
            for hit in hits
        )
        return RetrievalResult(
            snippets=snippets, translated_query=None, backend="semantic"
        )

    def retrieve_hybrid(self, question: str, k: int) -> RetrievalResult:
        """Union of both routes, deduplicated by source, best score wins.

        Either route may come up empty (no results, empty index) without
        failing the merge; only both failing yields ``NoResultsError``.
        """
        from .llm_client import TranslationFailedError

        legs: list[Snippet] = []
        failures = []
        degradable = (
            NoResultsError,
            IndexEmptyError,
            SearchApiUnavailableError,
            TranslationFailedError,
        )
        for getter in (self.retrieve_search, self.retrieve_semantic):
            try:
                legs.extend(getter(question, k).snippets)
            except degradable as exc:
                failures.append(exc)
        if len(failures) == 2:
            raise NoResultsError(
                f"both retrieval routes failed: {failures[0]}; {failures[1]}"
            )
        best: dict[str, Snippet] = {}
        for snippet in legs:
            kept = best.get(snippet.source_id)
            if kept is None or snippet.score > kept.score:
                best[snippet.source_id] = snippet
        merged = sorted(
            best.values(), key=lambda s: (-s.score, s.source_id)
        )
        return RetrievalResult(
            snippets=tuple(merged), translated_query=None, backend="hybrid"
        )
