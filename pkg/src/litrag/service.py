"""REST/SSE service exposing the ask pipeline.

JSON endpoints under ``/v1`` plus a Server-Sent-Events variant of
``ask`` that emits the retrieved snippets before the answer, then the
answer text in word-boundary chunks, then the full answer record.
Errors use one envelope everywhere: ``{"stage": ..., "error": ...}``
with 400 for request problems, 429 when the model queue is full, and
502 when an upstream stage fails.

Endpoints are plain synchronous functions (the pipeline is blocking),
so the framework runs them on its worker-thread pool; the pool is
widened at startup so that concurrency limits come from the model
queue — the component with the documented contract — rather than from
an incidental thread ceiling.
"""
from __future__ import annotations

import dataclasses
import json
import os
import re
import time
from typing import Iterator

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .chunker import SourceDocument
from .llm_client import QueueFullError, TranslationFailedError
from .orchestrator import (
    AskRequest,
    IngestAbortedError,
    Orchestrator,
    PipelineStageError,
    ValidationError,
)

__all__ = ["create_app"]

#: Soft cap on an SSE ``token`` chunk; chunks break at word boundaries.
STREAM_CHUNK_CHARS = 24

_ASK_KEYS = frozenset(
    {"question", "backend", "k", "max_snippet_tokens", "max_answer_tokens"}
)
_WORD_RE = re.compile(r"\S+\s*")


def _error(status: int, stage: str, error: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"stage": stage, "error": error})


def _ask_request(payload: dict) -> AskRequest:
    if not isinstance(payload, dict):
        raise ValidationError("request body must be a JSON object")
    unknown = sorted(set(payload) - _ASK_KEYS)
    if unknown:
        raise ValidationError(f"unknown key(s): {', '.join(unknown)}")
    if "question" not in payload:
        raise ValidationError("question is required")
    return AskRequest(**payload).validated()


def _record_dict(record) -> dict:
    return dataclasses.asdict(record)


def _sse(event: str, data: dict) -> str:
    return f"event: {event}\ndata: {json.dumps(data, ensure_ascii=False)}\n\n"


def _chunk_text(text: str, limit: int = STREAM_CHUNK_CHARS) -> Iterator[str]:
    """Split ``text`` into word-boundary chunks of roughly ``limit`` chars."""
    buffer = ""
    for match in _WORD_RE.finditer(text):
        word = match.group(0)
        if buffer and len(buffer) + len(word) > limit:
            yield buffer
            buffer = word
        else:
            buffer += word
    if buffer:
        yield buffer


def create_app(orchestrator: Orchestrator, *, ui_dir: str | None = None) -> FastAPI:
    """The ASGI application serving ``orchestrator`` over REST/SSE."""

    async def lifespan(app: FastAPI):
        from anyio import to_thread

        limiter = to_thread.current_default_thread_limiter()
        limiter.total_tokens = max(limiter.total_tokens, 128)
        yield

    app = FastAPI(title="litrag", lifespan=lifespan)

    from fastapi.exceptions import RequestValidationError

    @app.exception_handler(RequestValidationError)
    async def _framework_validation(request, exc):
        detail = "; ".join(
            f"{'.'.join(str(part) for part in err.get('loc', ()))}: "
            f"{err.get('msg', 'invalid')}"
            for err in exc.errors()[:3]
        )
        return _error(400, "validation", detail or "invalid request")

    @app.post("/v1/ask")
    def ask(payload: dict = Body(...)):
        try:
            request = _ask_request(payload)
        except ValidationError as exc:
            return _error(400, "validation", str(exc))
        try:
            return _record_dict(orchestrator.ask(request))
        except QueueFullError as exc:
            return _error(429, "queue", str(exc))
        except PipelineStageError as exc:
            return _error(502, exc.stage, str(exc))

    @app.post("/v1/translate")
    def translate(payload: dict = Body(...)):
        question = payload.get("question") if isinstance(payload, dict) else None
        if not isinstance(question, str) or not question.strip():
            return _error(400, "validation", "question must be nonempty")
        try:
            return {"query": orchestrator.translate(question)}
        except QueueFullError as exc:
            return _error(429, "queue", str(exc))
        except TranslationFailedError as exc:
            return _error(502, "translation", str(exc))
        except Exception as exc:
            return _error(502, "translation", str(exc))

    @app.post("/v1/search/semantic")
    def search_semantic(payload: dict = Body(...)):
        if not isinstance(payload, dict):
            return _error(400, "validation", "request body must be a JSON object")
        question = payload.get("question")
        k = payload.get("k", 5)
        if not isinstance(question, str) or not question.strip():
            return _error(400, "validation", "question must be nonempty")
        try:
            snippets = orchestrator.semantic_search(question, k)
        except ValidationError as exc:
            return _error(400, "validation", str(exc))
        except Exception as exc:
            return _error(502, "retrieval", str(exc))
        return {"snippets": [dataclasses.asdict(s) for s in snippets]}

    @app.post("/v1/ingest")
    async def ingest(request: Request):
        body = (await request.body()).decode("utf-8", errors="replace")
        documents = []
        for lineno, line in enumerate(body.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                documents.append(
                    SourceDocument(
                        doc_id=row["doc_id"],
                        title=row.get("title", ""),
                        body=row.get("body", ""),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                return _error(400, "validation", f"line {lineno}: {exc}")
        if not documents:
            return _error(400, "validation", "no documents in request body")

        from starlette.concurrency import run_in_threadpool

        try:
            report = await run_in_threadpool(orchestrator.ingest, documents)
        except IngestAbortedError as exc:
            return JSONResponse(
                status_code=502,
                content={
                    "stage": "ingest",
                    "error": str(exc.cause),
                    **dataclasses.asdict(exc.report),
                },
            )
        if orchestrator.index_path and orchestrator.store is not None:
            await run_in_threadpool(orchestrator.store.save, orchestrator.index_path)
        return dataclasses.asdict(report)

    @app.get("/v1/health")
    def health():
        return orchestrator.health()

    @app.get("/v1/ask/stream")
    def ask_stream(
        question: str,
        backend: str = "semantic",
        k: int = 5,
        max_snippet_tokens: int = 2000,
        max_answer_tokens: int = 512,
    ):
        try:
            request = AskRequest(
                question=question,
                backend=backend,
                k=k,
                max_snippet_tokens=max_snippet_tokens,
                max_answer_tokens=max_answer_tokens,
            ).validated()
        except ValidationError as exc:
            return _error(400, "validation", str(exc))

        def events() -> Iterator[str]:
            started = time.perf_counter()
            try:
                snippets, translated, retrieval_ms = orchestrator.prepare(request)
                for snippet in snippets:
                    yield _sse("snippet", dataclasses.asdict(snippet))
                prompt, answer, generation_ms = orchestrator.generate(
                    request, snippets
                )
                for chunk in _chunk_text(answer):
                    yield _sse("token", {"text": chunk})
                total_ms = (time.perf_counter() - started) * 1000.0
                record = {
                    "answer": answer,
                    "sources": [
                        {
                            "source_id": s.source_id,
                            "score": s.score,
                            "origin": s.origin,
                            "truncated": s.truncated,
                        }
                        for s in snippets
                    ],
                    "translated_query": translated,
                    "timings_ms": {
                        "retrieval": retrieval_ms,
                        "generation": generation_ms,
                        "total": total_ms,
                    },
                    "prompt_chars": len(prompt),
                }
                yield _sse("done", record)
            except QueueFullError as exc:
                yield _sse("error", {"stage": "queue", "error": str(exc)})
            except PipelineStageError as exc:
                yield _sse("error", {"stage": exc.stage, "error": str(exc)})
            except Exception as exc:  # pragma: no cover - defensive
                yield _sse("error", {"stage": "stream", "error": str(exc)})

        return StreamingResponse(
            events(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-store", "X-Accel-Buffering": "no"},
        )

    if ui_dir and os.path.isdir(ui_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
