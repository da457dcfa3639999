"""Command-line interface: ingest, ask, translate, search, serve.

One binary over the same pipeline the service exposes.  A JSON config
file (``--config`` or ``$LITRAG_CONFIG``) selects the index location
and backends; without one, everything runs on in-process defaults
(deterministic embedder, empty index, scripted stub model).
"""
from __future__ import annotations

import dataclasses
import json
import sys

import click

from .chunker import SourceDocument
from .config import build_orchestrator, load_config
from .orchestrator import AskRequest, IngestAbortedError

__all__ = ["main"]


def _load_documents(path: str) -> list[SourceDocument]:
    documents = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
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
                raise click.ClickException(f"{path}:{lineno}: {exc}")
    if not documents:
        raise click.ClickException(f"{path}: no documents found")
    return documents


def _orchestrator(config_path: str | None, index_override: str | None = None):
    try:
        config = load_config(config_path)
        if index_override:
            config = dataclasses.replace(config, index_path=index_override)
        return config, build_orchestrator(config)
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc))


@click.group()
@click.option(
    "--config",
    "config_path",
    envvar="LITRAG_CONFIG",
    default=None,
    type=click.Path(dir_okay=False),
    help="JSON config file (also read from $LITRAG_CONFIG).",
)
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    """Literature question answering over a local index and search API."""
    ctx.obj = config_path


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--index", "index_path", default=None, help="Index file to write.")
@click.pass_obj
def ingest(config_path: str | None, file: str, index_path: str | None) -> None:
    """Chunk, embed and index the JSONL documents in FILE."""
    config, orch = _orchestrator(config_path, index_path)
    documents = _load_documents(file)
    try:
        report = orch.ingest(documents)
    except IngestAbortedError as exc:
        click.echo(json.dumps(dataclasses.asdict(exc.report)))
        raise click.ClickException(str(exc.cause))
    if orch.index_path:
        orch.store.save(orch.index_path)
        click.echo(f"index written to {orch.index_path}", err=True)
    click.echo(json.dumps(dataclasses.asdict(report)))


@main.command()
@click.argument("question")
@click.option(
    "--backend",
    type=click.Choice(["search", "semantic", "hybrid"]),
    default="semantic",
    show_default=True,
)
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Print the full answer record as JSON.")
@click.pass_obj
def ask(
    config_path: str | None, question: str, backend: str, k: int, as_json: bool
) -> None:
    """Answer QUESTION from the literature, with sources."""
    _, orch = _orchestrator(config_path)
    try:
        record = orch.ask(AskRequest(question=question, backend=backend, k=k))
    except Exception as exc:
        raise click.ClickException(str(exc))
    if as_json:
        click.echo(json.dumps(dataclasses.asdict(record), ensure_ascii=False))
        return
    click.echo(record.answer)
    if record.translated_query:
        click.echo(f"\nquery: {record.translated_query}")
    if record.sources:
        click.echo("\nsources:")
        for source in record.sources:
            marker = " (truncated)" if source.truncated else ""
            click.echo(
                f"  {source.source_id}  {source.score:.2f}  "
                f"{source.origin}{marker}"
            )
    else:
        click.echo("\nsources: none")


@main.command()
@click.argument("question")
@click.pass_obj
def translate(config_path: str | None, question: str) -> None:
    """Print the structured search query for QUESTION."""
    _, orch = _orchestrator(config_path)
    try:
        click.echo(orch.translate(question))
    except Exception as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.argument("question")
@click.option("-k", type=int, default=5, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Print snippets as JSON.")
@click.pass_obj
def search(config_path: str | None, question: str, k: int, as_json: bool) -> None:
    """Rank indexed passages against QUESTION (semantic k-NN)."""
    _, orch = _orchestrator(config_path)
    try:
        snippets = orch.semantic_search(question, k)
    except Exception as exc:
        raise click.ClickException(str(exc))
    if as_json:
        click.echo(
            json.dumps([dataclasses.asdict(s) for s in snippets], ensure_ascii=False)
        )
        return
    for snippet in snippets:
        text = snippet.text if len(snippet.text) <= 100 else snippet.text[:97] + "..."
        click.echo(f"{snippet.score:.4f}  {snippet.source_id}  {text}")


@main.command()
@click.option("--host", default=None, help="Bind address (default from config).")
@click.option("--port", type=int, default=None, help="Port (default from config).")
@click.option("--index", "index_path", default=None, help="Index file to serve.")
@click.option(
    "--ui-dir",
    envvar="LITRAG_UI_DIR",
    default=None,
    type=click.Path(file_okay=False),
    help="Static chat UI build to mount at /ui.",
)
@click.option(
    "--dev",
    is_flag=True,
    help="Serve the built-in fixture pipeline (offline demo corpus).",
)
@click.pass_obj
def serve(
    config_path: str | None,
    host: str | None,
    port: int | None,
    index_path: str | None,
    ui_dir: str | None,
    dev: bool,
) -> None:
    """Run the REST/SSE service."""
    import uvicorn

    from .service import create_app

    if dev:
        from .testing import build_fixture_orchestrator

        config = load_config(config_path)
        orch = build_fixture_orchestrator(index_path=index_path)
    else:
        config, orch = _orchestrator(config_path, index_path)
    app = create_app(orch, ui_dir=ui_dir)
    uvicorn.run(
        app,
        host=host or config.server.host,
        port=port or config.server.port,
        log_level="info",
    )


if __name__ == "__main__":
    main(prog_name="litrag")
