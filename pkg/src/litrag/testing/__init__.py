"""Self-contained fixtures: corpus, mock search API, scripted model.

Everything the end-to-end paths need without network or GPU: a
50-document literature corpus, an in-process mock of the search API
wire contract, and a default stub script that answers the demo
question.  The dev server (``litrag serve --dev``) and the test suite
assemble the same pieces through :func:`build_fixture_orchestrator`.
"""
from .corpus import (
    ISPEC_ABSTRACT,
    ISPEC_BIBCODE,
    fixture_corpus,
    fixture_search_docs,
)
from .fixture_app import build_fixture_orchestrator, default_stub_script
from .mock_search import mock_search_transport

__all__ = [
    "ISPEC_ABSTRACT",
    "ISPEC_BIBCODE",
    "build_fixture_orchestrator",
    "default_stub_script",
    "fixture_corpus",
    "fixture_search_docs",
    "mock_search_transport",
]
