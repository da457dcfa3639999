"""REST/SSE surface: endpoint contracts, error envelopes, stream fidelity."""
import json

import pytest
from fastapi.testclient import TestClient

from litrag.llm_client import (
    BackendDescriptor,
    BackendUnavailableError,
    LlmClient,
    QueueFullError,
)
from litrag.orchestrator import Orchestrator
from litrag.retrieval import Retriever
from litrag.service import STREAM_CHUNK_CHARS, _chunk_text, create_app
from litrag.testing import ISPEC_BIBCODE, build_fixture_orchestrator


@pytest.fixture(scope="module")
def orchestrator():
    return build_fixture_orchestrator()


@pytest.fixture(scope="module")
def client(orchestrator):
    with TestClient(create_app(orchestrator)) as test_client:
        yield test_client


def parse_sse(raw: str):
    events = []
    for block in raw.strip().split("\n\n"):
        lines = dict(line.split(": ", 1) for line in block.split("\n"))
        events.append((lines["event"], json.loads(lines["data"])))
    return events


# --- health -------------------------------------------------------------------


def test_health(client):
    response = client.get("/v1/health")
    assert response.status_code == 200
    payload = response.json()
    assert payload["status"] == "ok"
    assert payload["llm"] == "ok"
    assert payload["index_records"] > 0


# --- ask ----------------------------------------------------------------------


def test_ask_returns_answer_record(client):
    response = client.post(
        "/v1/ask", json={"question": "what is iSpec?", "backend": "search"}
    )
    assert response.status_code == 200
    record = response.json()
    assert set(record) == {
        "answer", "sources", "translated_query", "timings_ms", "prompt_chars",
    }
    assert "iSpec" in record["answer"]
    assert record["translated_query"] == "(abs:iSpec)"
    assert [s["source_id"] for s in record["sources"]] == [ISPEC_BIBCODE]
    source = record["sources"][0]
    assert set(source) == {"source_id", "score", "origin", "truncated"}


def test_ask_semantic_default_backend(client):
    response = client.post("/v1/ask", json={"question": "what is iSpec?"})
    assert response.status_code == 200
    record = response.json()
    assert record["translated_query"] is None
    assert any(s["origin"] == "semantic" for s in record["sources"])


@pytest.mark.parametrize(
    "payload,fragment",
    [
        ({"question": "   "}, "nonempty"),
        ({"question": "q", "backend": "psychic"}, "backend"),
        ({"question": "q", "k": 0}, "k must be"),
        ({"question": "q", "extra": 1}, "unknown key"),
        ({}, "question is required"),
    ],
)
def test_ask_validation_envelope(client, payload, fragment):
    response = client.post("/v1/ask", json=payload)
    assert response.status_code == 400
    body = response.json()
    assert body["stage"] == "validation"
    assert fragment in body["error"]


def test_ask_non_object_body_is_validation_error(client):
    response = client.post(
        "/v1/ask", content=b'"just a string"',
        headers={"content-type": "application/json"},
    )
    assert response.status_code == 400
    assert response.json()["stage"] == "validation"


class _FailingBackend:
    descriptor = BackendDescriptor(
        kind="remote_completion", base_url="http://x", model_name="m"
    )

    def complete(self, prompt, params):
        raise BackendUnavailableError("model host down")

    def step_scores(self, prompt, emitted):
        raise BackendUnavailableError("model host down")


def failing_generation_app():
    orch = build_fixture_orchestrator()
    broken = LlmClient(_FailingBackend())
    orch.llm_client = broken
    return create_app(orch)


def test_generation_failure_maps_to_502_with_stage():
    with TestClient(failing_generation_app()) as client:
        response = client.post("/v1/ask", json={"question": "what is iSpec?"})
    assert response.status_code == 502
    body = response.json()
    assert body["stage"] == "generation"
    assert "model host down" in body["error"]


def test_queue_full_maps_to_429():
    class RejectingClient:
        backend = None

        def complete(self, prompt, params):
            raise QueueFullError("33 requests already admitted")

    orch = build_fixture_orchestrator()
    orch.llm_client = RejectingClient()
    with TestClient(create_app(orch)) as client:
        response = client.post("/v1/ask", json={"question": "what is iSpec?"})
    assert response.status_code == 429
    assert response.json()["stage"] == "queue"


# --- translate ------------------------------------------------------------------


def test_translate_endpoint(client):
    response = client.post("/v1/translate", json={"question": "what is iSpec?"})
    assert response.status_code == 200
    assert response.json() == {"query": "(abs:iSpec)"}


def test_translate_requires_question(client):
    response = client.post("/v1/translate", json={})
    assert response.status_code == 400
    assert response.json()["stage"] == "validation"


# --- semantic search ---------------------------------------------------------------


def test_search_semantic_endpoint(client):
    response = client.post(
        "/v1/search/semantic",
        json={"question": "stellar spectra analysis", "k": 3},
    )
    assert response.status_code == 200
    snippets = response.json()["snippets"]
    assert len(snippets) == 3
    for row in snippets:
        assert set(row) == {"text", "source_id", "score", "origin", "truncated"}
        assert row["origin"] == "semantic"
    scores = [row["score"] for row in snippets]
    assert scores == sorted(scores, reverse=True)


def test_search_semantic_validates_k(client):
    response = client.post(
        "/v1/search/semantic", json={"question": "q", "k": 0}
    )
    assert response.status_code == 400


def test_search_semantic_empty_index_is_502():
    from litrag.embedder import DeterministicEmbedder
    from litrag.vector_store import VectorStore
    from litrag.llm_client import ScriptedStubBackend

    llm = LlmClient(ScriptedStubBackend([]))
    orch = Orchestrator(
        retriever=Retriever(
            store=VectorStore(64), embedder=DeterministicEmbedder(dim=64),
            llm_client=llm,
        ),
        llm_client=llm,
    )
    with TestClient(create_app(orch)) as client:
        response = client.post(
            "/v1/search/semantic", json={"question": "q", "k": 3}
        )
    assert response.status_code == 502
    assert response.json()["stage"] == "retrieval"


# --- ingest ---------------------------------------------------------------------------


def test_ingest_endpoint_counts(tmp_path):
    orch = build_fixture_orchestrator()
    before = len(orch.store)
    lines = [
        json.dumps({"doc_id": "new1", "title": "A",
                    "body": ("alpha beta gamma " * 12).strip() + "."}),
        json.dumps({"doc_id": "new2", "title": "B", "body": ""}),
    ]
    with TestClient(create_app(orch)) as client:
        response = client.post("/v1/ingest", content="\n".join(lines).encode())
    assert response.status_code == 200
    assert response.json() == {"docs": 2, "chunks": 1, "skipped": 1}
    assert len(orch.store) == before + 1


def test_ingest_bad_line_reports_line_number():
    orch = build_fixture_orchestrator()
    body = json.dumps({"doc_id": "ok", "body": "fine"}) + "\nnot json\n"
    with TestClient(create_app(orch)) as client:
        response = client.post("/v1/ingest", content=body.encode())
    assert response.status_code == 400
    assert "line 2" in response.json()["error"]


def test_ingest_empty_body_rejected(client):
    response = client.post("/v1/ingest", content=b"")
    assert response.status_code == 400


def test_ingest_saves_index_when_path_configured(tmp_path):
    index_path = str(tmp_path / "saved.lrag")
    orch = build_fixture_orchestrator(index_path=index_path)
    line = json.dumps({"doc_id": "saved-doc", "title": "S",
                       "body": ("word " * 40).strip() + "."})
    with TestClient(create_app(orch)) as client:
        response = client.post("/v1/ingest", content=line.encode())
    assert response.status_code == 200
    from litrag.vector_store import VectorStore

    reloaded = VectorStore.load(index_path)
    assert len(reloaded) == len(orch.store)


# --- SSE stream --------------------------------------------------------------------


def test_stream_event_sequence_and_fidelity(client):
    with client.stream(
        "GET", "/v1/ask/stream",
        params={"question": "what is iSpec?", "backend": "semantic"},
    ) as response:
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("text/event-stream")
        events = parse_sse("".join(response.iter_text()))

    kinds = [kind for kind, _ in events]
    # snippets strictly precede tokens; exactly one final done
    assert kinds[-1] == "done"
    boundary = kinds.index("token")
    assert all(kind == "snippet" for kind in kinds[:boundary])
    assert all(kind == "token" for kind in kinds[boundary:-1])

    done = events[-1][1]
    reassembled = "".join(data["text"] for kind, data in events if kind == "token")
    assert reassembled == done["answer"]

    snippet_events = [data for kind, data in events if kind == "snippet"]
    assert len(snippet_events) == len(done["sources"])
    for snippet, source in zip(snippet_events, done["sources"]):
        assert snippet["source_id"] == source["source_id"]
        assert snippet["score"] == source["score"]
        assert snippet["text"]  # stream exposes the grounding text itself

    assert set(done) == {
        "answer", "sources", "translated_query", "timings_ms", "prompt_chars",
    }
    assert any(s["source_id"] == ISPEC_BIBCODE for s in done["sources"])


def test_stream_validation_is_http_400_not_event(client):
    response = client.get("/v1/ask/stream", params={"question": "  "})
    assert response.status_code == 400
    assert response.json()["stage"] == "validation"


def test_stream_midstream_failure_emits_error_event():
    with TestClient(failing_generation_app()) as client:
        with client.stream(
            "GET", "/v1/ask/stream", params={"question": "what is iSpec?"}
        ) as response:
            assert response.status_code == 200  # stream already started
            events = parse_sse("".join(response.iter_text()))
    kinds = [kind for kind, _ in events]
    assert kinds[-1] == "error"
    assert all(kind == "snippet" for kind in kinds[:-1])  # retrieval succeeded
    error = events[-1][1]
    assert error["stage"] == "generation"
    assert "model host down" in error["error"]


def test_chunk_text_word_boundaries():
    text = "alpha beta gamma delta epsilon zeta eta theta iota kappa"
    chunks = list(_chunk_text(text))
    assert "".join(chunks) == text
    for chunk in chunks[:-1]:
        assert len(chunk) <= STREAM_CHUNK_CHARS + 8  # word carry-over slack
    # chunks end at word boundaries (trailing space) except possibly the last
    for chunk in chunks[:-1]:
        assert chunk.endswith(" ")


def test_chunk_text_overlong_word_goes_out_alone():
    text = "x" * 100 + " tail"
    chunks = list(_chunk_text(text))
    assert "".join(chunks) == text
    assert chunks[0] == "x" * 100 + " "


# --- static UI mount -----------------------------------------------------------------


def test_ui_mounted_when_directory_exists(tmp_path):
    ui = tmp_path / "dist"
    ui.mkdir()
    (ui / "index.html").write_text("<!doctype html><title>chat</title>")
    orch = build_fixture_orchestrator()
    with TestClient(create_app(orch, ui_dir=str(ui))) as client:
        response = client.get("/ui/")
        assert response.status_code == 200
        assert "chat" in response.text


def test_ui_absent_when_no_directory(client):
    assert client.get("/ui/").status_code == 404
