/** DOM rendering: the transcript is rebuilt from store state on change.

Everything shown comes from the entries — answer text from stream
events, one source row per source in the entry, never a fabricated row.
*/
import type { ChatEntry, SourceRef } from "./types.js";

const STATUS_LABEL: Record<ChatEntry["status"], string> = {
  pending: "queued",
  streaming: "streaming",
  done: "done",
  error: "error",
};

export function renderEntries(container: HTMLElement, entries: ChatEntry[]): void {
  container.replaceChildren(...entries.map(renderEntry));
}

function renderEntry(entry: ChatEntry): HTMLElement {
  const card = el("article", `entry entry-${entry.status}`);

  const header = el("header", "entry-header");
  header.append(
    el("span", "question", entry.question),
    el("span", `status status-${entry.status}`, STATUS_LABEL[entry.status]),
    el("span", "backend", entry.backend_used),
  );
  card.append(header);

  if (entry.error !== null) {
    const box = el("div", "error-box");
    box.append(
      el("span", "error-stage", entry.error.stage),
      el("span", "error-message", entry.error.message),
    );
    card.append(box);
    return card;
  }

  if (entry.translated_query !== null) {
    card.append(renderTranslatedQuery(entry.translated_query));
  }
  card.append(renderSources(entry));

  const answer = el("p", "answer", entry.answer_text);
  if (entry.status === "streaming") {
    answer.append(el("span", "cursor", "▌"));
  }
  card.append(answer);
  return card;
}

/** The translated query, verbatim, with a copy button. */
function renderTranslatedQuery(query: string): HTMLElement {
  const wrap = el("div", "translated-query");
  wrap.append(el("code", "query-text", query));
  const copy = el("button", "copy-button", "copy") as HTMLButtonElement;
  copy.type = "button";
  copy.addEventListener("click", () => {
    void navigator.clipboard.writeText(query);
  });
  wrap.append(copy);
  return wrap;
}

export function renderSources(entry: ChatEntry): HTMLElement {
  const panel = el("section", "sources");
  if (entry.sources.length === 0) {
    if (entry.status === "done") {
      panel.append(el("p", "no-sources", "No literature found"));
    }
    return panel;
  }
  const list = el("ul", "source-list");
  entry.sources.forEach((source, index) => {
    list.append(renderSourceRow(source, entry.snippets[index]?.text));
  });
  panel.append(list);
  return panel;
}

function renderSourceRow(
  source: SourceRef,
  snippetText: string | undefined,
): HTMLElement {
  const row = el("li", "source-row");
  row.append(
    el("span", `origin origin-${source.origin}`, source.origin),
    el("code", "source-id", source.source_id),
    el("span", "score", source.score.toFixed(2)),
  );
  if (source.truncated) {
    row.append(el("span", "truncated", "truncated"));
  }
  if (snippetText !== undefined) {
    const details = document.createElement("details");
    details.className = "snippet";
    const summary = document.createElement("summary");
    summary.textContent = "snippet";
    details.append(summary, el("p", "snippet-text", snippetText));
    row.append(details);
  }
  return row;
}

export function renderQueueNotice(target: HTMLElement, queued: number): void {
  target.textContent = queued > 0 ? `${queued} queued` : "";
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}
