"""The end-to-end ask and ingest pipelines.

``ask`` runs retrieve → budget → prompt → complete and returns an
answer together with exactly the sources that were in the prompt;
``ingest`` runs chunk → embed → upsert in streaming batches.  Stage
failures surface with a stage label so callers can tell a retrieval
problem from a generation problem; empty retrieval is not a failure —
the model is asked anyway, with the explicit nothing-found dialog.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterable

from .chunker import SourceDocument, chunk_document
from .llm_client import CompletionParams, QueueFullError
from .prompt_builder import RESERVED_TAGS, Snippet, build_answer_prompt
from .retrieval import IndexEmptyError, NoResultsError, budget_snippets
from .vector_store import EmbeddedChunk

__all__ = [
    "AnswerRecord",
    "AskRequest",
    "GenerationStageError",
    "IngestAbortedError",
    "IngestReport",
    "Orchestrator",
    "RetrievalStageError",
    "SourceRef",
    "ValidationError",
]

BACKENDS = ("search", "semantic", "hybrid")


class ValidationError(ValueError):
    """The request violates its own invariants; nothing was attempted."""


class PipelineStageError(RuntimeError):
    """An upstream failure, labeled with the pipeline stage it hit."""

    stage = "pipeline"

    def __init__(self, cause: BaseException) -> None:
        super().__init__(f"{self.stage} failed: {cause}")
        self.cause = cause


class RetrievalStageError(PipelineStageError):
    stage = "retrieval"


class GenerationStageError(PipelineStageError):
    stage = "generation"


@dataclass(frozen=True)
class AskRequest:
    question: str
    backend: str = "semantic"
    k: int = 5
    max_snippet_tokens: int = 2000
    max_answer_tokens: int = 512

    def validated(self) -> "AskRequest":
        question = self.question.strip() if isinstance(self.question, str) else ""
        if not question:
            raise ValidationError("question must be nonempty")
        for tag in RESERVED_TAGS:
            if tag in question:
                raise ValidationError(f"question must not contain {tag!r}")
        if self.backend not in BACKENDS:
            raise ValidationError(f"backend must be one of {BACKENDS}")
        if not isinstance(self.k, int) or not 1 <= self.k <= 50:
            raise ValidationError("k must be an integer in [1, 50]")
        if not isinstance(self.max_snippet_tokens, int) or self.max_snippet_tokens < 1:
            raise ValidationError("max_snippet_tokens must be a positive integer")
        if not isinstance(self.max_answer_tokens, int) or self.max_answer_tokens < 1:
            raise ValidationError("max_answer_tokens must be a positive integer")
        return AskRequest(
            question=question,
            backend=self.backend,
            k=self.k,
            max_snippet_tokens=self.max_snippet_tokens,
            max_answer_tokens=self.max_answer_tokens,
        )


@dataclass(frozen=True)
class SourceRef:
    source_id: str
    score: float
    origin: str
    truncated: bool


@dataclass(frozen=True)
class AnswerRecord:
    answer: str
    sources: tuple[SourceRef, ...]
    translated_query: str | None
    timings_ms: dict[str, float]
    prompt_chars: int


@dataclass(frozen=True)
class IngestReport:
    docs: int = 0
    chunks: int = 0
    skipped: int = 0


class IngestAbortedError(RuntimeError):
    """A batch failed mid-ingest; carries the counts committed so far."""

    def __init__(self, report: IngestReport, cause: BaseException) -> None:
        super().__init__(f"ingest aborted after {report}: {cause}")
        self.report = report
        self.cause = cause


def _strip_reserved_tags(text: str) -> str:
    for tag in RESERVED_TAGS:
        text = text.replace(tag, " ")
    return text.strip()


class Orchestrator:
    """Owns the pipeline wiring: retriever, LLM client, store, embedder."""

    def __init__(
        self,
        *,
        retriever,
        llm_client,
        store=None,
        embedder=None,
        index_path: str | None = None,
    ) -> None:
        self.retriever = retriever
        self.llm_client = llm_client
        self.store = store if store is not None else retriever.store
        self.embedder = embedder if embedder is not None else retriever.embedder
        self.index_path = index_path

    # -- ask pipeline -------------------------------------------------

    def prepare(self, request: AskRequest):
        """Retrieval + budgeting; returns (snippets, translated_query, ms).

        Empty retrieval (no hits, empty index) yields zero snippets and
        lets the pipeline continue; genuine failures are wrapped as
        :class:`RetrievalStageError`.
        """
        started = time.perf_counter()
        try:
            if request.backend == "search":
                result = self.retriever.retrieve_search(request.question, request.k)
            elif request.backend == "semantic":
                result = self.retriever.retrieve_semantic(request.question, request.k)
            else:
                result = self.retriever.retrieve_hybrid(request.question, request.k)
            snippets, translated = list(result.snippets), result.translated_query
        except (NoResultsError, IndexEmptyError):
            snippets, translated = [], None
        except QueueFullError:
            raise
        except Exception as exc:
            raise RetrievalStageError(exc) from exc
        safe = []
        for snippet in snippets:
            text = _strip_reserved_tags(snippet.text)
            if not text:
                continue
            if text != snippet.text:
                snippet = Snippet(
                    text=text,
                    source_id=snippet.source_id,
                    score=snippet.score,
                    origin=snippet.origin,
                    truncated=snippet.truncated,
                )
            safe.append(snippet)
        budgeted = budget_snippets(safe, request.max_snippet_tokens)
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        return budgeted, translated, elapsed_ms

    def generate(self, request: AskRequest, snippets: list[Snippet]):
        """Prompt + completion; returns (prompt, answer_text, ms)."""
        prompt = build_answer_prompt(request.question, snippets)
        started = time.perf_counter()
        try:
            completion = self.llm_client.complete(
                prompt, CompletionParams(max_tokens=request.max_answer_tokens)
            )
        except QueueFullError:
            raise
        except Exception as exc:
            raise GenerationStageError(exc) from exc
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        return prompt, completion.text, elapsed_ms

    def ask(self, request: AskRequest) -> AnswerRecord:
        request = request.validated()
        started = time.perf_counter()
        snippets, translated, retrieval_ms = self.prepare(request)
        prompt, answer, generation_ms = self.generate(request, snippets)
        total_ms = (time.perf_counter() - started) * 1000.0
        return AnswerRecord(
            answer=answer,
            sources=tuple(
                SourceRef(
                    source_id=s.source_id,
                    score=s.score,
                    origin=s.origin,
                    truncated=s.truncated,
                )
                for s in snippets
            ),
            translated_query=translated,
            timings_ms={
                "retrieval": retrieval_ms,
                "generation": generation_ms,
                "total": total_ms,
            },
            prompt_chars=len(prompt),
        )

    # -- side channels ------------------------------------------------

    def translate(self, question: str) -> str:
        question = question.strip()
        if not question:
            raise ValidationError("question must be nonempty")
        return self.retriever.translate(question)

    def semantic_search(self, question: str, k: int):
        question = question.strip()
        if not question:
            raise ValidationError("question must be nonempty")
        if not isinstance(k, int) or not 1 <= k <= 50:
            raise ValidationError("k must be an integer in [1, 50]")
        return self.retriever.retrieve_semantic(question, k).snippets

    def health(self) -> dict:
        descriptor = getattr(self.llm_client, "backend", None)
        descriptor = getattr(descriptor, "descriptor", None)
        llm_ok = descriptor is not None and (
            descriptor.kind == "scripted_stub" or bool(descriptor.base_url)
        )
        return {
            "status": "ok",
            "index_records": len(self.store) if self.store is not None else 0,
            "llm": "ok" if llm_ok else "unavailable",
        }

    # -- ingest pipeline ----------------------------------------------

    def ingest(
        self, documents: Iterable[SourceDocument], *, batch_size: int = 64
    ) -> IngestReport:
        if batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.store is None or self.embedder is None:
            raise ValueError("ingest needs a store and an embedder")
        docs = chunks = skipped = 0
        pending: list[tuple] = []

        def flush():
            nonlocal chunks
            if not pending:
                return
            texts = [chunk.text for chunk, _ in pending]
            vectors = self.embedder.embed_batch(texts)
            self.store.upsert(
                [
                    EmbeddedChunk(chunk=chunk, vector=vectors[i], doc_title=title)
                    for i, (chunk, title) in enumerate(pending)
                ]
            )
            chunks += len(pending)
            pending.clear()

        try:
            for doc in documents:
                docs += 1
                doc_chunks = chunk_document(doc)
                if not doc_chunks:
                    skipped += 1
                    continue
                for chunk in doc_chunks:
                    pending.append((chunk, doc.title))
                    if len(pending) >= batch_size:
                        flush()
            flush()
        except Exception as exc:
            raise IngestAbortedError(
                IngestReport(docs=docs, chunks=chunks, skipped=skipped), exc
            ) from exc
        return IngestReport(docs=docs, chunks=chunks, skipped=skipped)
