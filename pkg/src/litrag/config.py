"""JSON runtime configuration and wiring of the object graph.

A single config file describes every pluggable piece — index location,
embedder backend, search API, language-model backend, queue sizing,
query fields, and server bind address — and :func:`build_orchestrator`
turns it into a ready :class:`~litrag.orchestrator.Orchestrator`.  The
file path comes from ``--config`` on the CLI or the ``LITRAG_CONFIG``
environment variable; every key is optional and defaults to the
offline-friendly values below.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .embedder import EmbedderConfig, build_embedder
from .llm_client import (
    LlmClient,
    RemoteCompletionBackend,
    ScriptedStubBackend,
    load_script,
)
from .orchestrator import Orchestrator
from .query_ast import DEFAULT_FIELDS
from .retrieval import Retriever, SearchApiClient, SearchApiConfig
from .vector_store import VectorStore

__all__ = [
    "AppConfig",
    "LlmConfig",
    "ServerConfig",
    "build_orchestrator",
    "load_config",
]

_LLM_KINDS = ("scripted_stub", "remote")


@dataclass(frozen=True)
class LlmConfig:
    """Which language-model backend to talk to and how hard to queue."""

    kind: str = "scripted_stub"
    script_path: str = ""
    base_url: str = ""
    model_name: str = ""
    max_parallel_requests: int = 1
    queue_capacity: int = 32

    def __post_init__(self) -> None:
        if self.kind not in _LLM_KINDS:
            raise ValueError(f"llm.kind must be one of {_LLM_KINDS}")
        if self.kind == "remote" and not self.base_url:
            raise ValueError("llm.kind 'remote' requires llm.base_url")
        if self.max_parallel_requests < 1:
            raise ValueError("llm.max_parallel_requests must be at least 1")
        if self.queue_capacity < 0:
            raise ValueError("llm.queue_capacity must be non-negative")


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8080

    def __post_init__(self) -> None:
        if not 1 <= self.port <= 65535:
            raise ValueError("server.port must be in 1..65535")


@dataclass(frozen=True)
class AppConfig:
    """Everything the CLI and server need to assemble the pipeline."""

    index_path: str = ""
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    search: SearchApiConfig = field(default_factory=SearchApiConfig)
    llm: LlmConfig = field(default_factory=LlmConfig)
    fields: tuple[str, ...] = DEFAULT_FIELDS
    server: ServerConfig = field(default_factory=ServerConfig)

    def __post_init__(self) -> None:
        if not self.fields:
            raise ValueError("fields must name at least one query field")


def _build_section(cls, raw: dict, section: str):
    if not isinstance(raw, dict):
        raise ValueError(f"config section {section!r} must be an object")
    names = {f for f in cls.__dataclass_fields__}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ValueError(f"unknown key(s) in {section!r}: {', '.join(unknown)}")
    return cls(**raw)


def parse_config(raw: dict) -> AppConfig:
    """Validate a decoded JSON object into an :class:`AppConfig`."""
    if not isinstance(raw, dict):
        raise ValueError("config root must be a JSON object")
    known = {"index_path", "embedder", "search", "llm", "fields", "server"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"unknown top-level key(s): {', '.join(unknown)}")
    kwargs: dict = {}
    if "index_path" in raw:
        kwargs["index_path"] = raw["index_path"]
    if "embedder" in raw:
        kwargs["embedder"] = _build_section(
            EmbedderConfig, raw["embedder"], "embedder"
        )
    if "search" in raw:
        kwargs["search"] = _build_section(
            SearchApiConfig, raw["search"], "search"
        )
    if "llm" in raw:
        kwargs["llm"] = _build_section(LlmConfig, raw["llm"], "llm")
    if "fields" in raw:
        kwargs["fields"] = tuple(raw["fields"])
    if "server" in raw:
        kwargs["server"] = _build_section(ServerConfig, raw["server"], "server")
    return AppConfig(**kwargs)


def load_config(path: str | None = None) -> AppConfig:
    """Load config from ``path``, ``$LITRAG_CONFIG``, or pure defaults."""
    path = path or os.environ.get("LITRAG_CONFIG") or ""
    if not path:
        return AppConfig()
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(json.load(fh))


def _build_llm(config: LlmConfig) -> LlmClient:
    if config.kind == "scripted_stub":
        script = load_script(config.script_path) if config.script_path else []
        backend = ScriptedStubBackend(script)
    else:
        backend = RemoteCompletionBackend(
            config.base_url,
            config.model_name,
            max_parallel_requests=config.max_parallel_requests,
        )
    return LlmClient(backend, queue_capacity=config.queue_capacity)


def build_orchestrator(config: AppConfig) -> Orchestrator:
    """Assemble the full pipeline described by ``config``.

    An existing index file at ``index_path`` is loaded; otherwise an
    empty store of the configured dimension is created.  The search
    client is only constructed when a base URL is configured, so
    offline deployments simply lose the search/hybrid backends.
    """
    embedder = build_embedder(config.embedder)
    if config.index_path and os.path.exists(config.index_path):
        store = VectorStore.load(config.index_path)
        if store.dim != config.embedder.dim:
            raise ValueError(
                f"index at {config.index_path} has dim {store.dim}, "
                f"config says {config.embedder.dim}"
            )
    else:
        store = VectorStore(config.embedder.dim)
    search_client = (
        SearchApiClient(config.search) if config.search.base_url else None
    )
    llm = _build_llm(config.llm)
    retriever = Retriever(
        store=store,
        embedder=embedder,
        search_client=search_client,
        llm_client=llm,
        fields=config.fields,
    )
    return Orchestrator(
        retriever=retriever,
        llm_client=llm,
        index_path=config.index_path or None,
    )
