/** Client-side chat state: entries, status transitions, and the queue.

One question streams at a time, mirroring the service's single-flight
model queue; further submissions wait in a visible queue. Entry status
moves monotonically pending → streaming → done|error, and source rows
are frozen once snippet events stop arriving (first token seals them) —
the `done` record is then authoritative for answer and sources.
*/
import type {
  AnswerRecord,
  AskClient,
  AskSettings,
  ChatEntry,
  SnippetEvent,
} from "./types.js";

/** True when the composer may submit: nonempty after trimming. */
export function canSubmit(text: string): boolean {
  return text.trim().length > 0;
}

interface QueuedAsk {
  entry: ChatEntry;
  settings: AskSettings;
}

export class ChatStore {
  readonly entries: ChatEntry[] = [];
  /** Called after every state change; the view re-renders from scratch. */
  onChange: () => void = () => {};

  private readonly client: AskClient;
  private readonly queue: QueuedAsk[] = [];
  private active: ChatEntry | null = null;
  private nextId = 1;
  private idleWaiters: Array<() => void> = [];

  constructor(client: AskClient) {
    this.client = client;
  }

  /** Entries waiting behind the currently streaming one. */
  queuedCount(): number {
    return this.queue.length;
  }

  streaming(): boolean {
    return this.active !== null;
  }

  /** Resolves once no entry is active and the queue is empty. */
  idle(): Promise<void> {
    if (this.active === null && this.queue.length === 0) {
      return Promise.resolve();
    }
    return new Promise((resolve) => this.idleWaiters.push(resolve));
  }

  /** Append a question; returns null (and changes nothing) on empty input. */
  submit(text: string, settings: AskSettings): ChatEntry | null {
    const question = text.trim();
    if (!question) {
      return null;
    }
    const entry: ChatEntry = {
      id: this.nextId++,
      question,
      backend_used: settings.backend,
      status: "pending",
      answer_text: "",
      sources: [],
      snippets: [],
      translated_query: null,
      error: null,
    };
    this.entries.push(entry);
    this.queue.push({ entry, settings: { ...settings } });
    this.onChange();
    this.pump();
    return entry;
  }

  private pump(): void {
    if (this.active !== null) {
      return;
    }
    const next = this.queue.shift();
    if (next === undefined) {
      const waiters = this.idleWaiters;
      this.idleWaiters = [];
      for (const resolve of waiters) {
        resolve();
      }
      return;
    }
    const { entry, settings } = next;
    this.active = entry;
    entry.status = "streaming";
    this.onChange();

    let sealed = false; // sources stop changing once the answer starts
    const finalize = (mutate: (entry: ChatEntry) => void): void => {
      if (entry.status === "done" || entry.status === "error") {
        return; // terminal states are terminal
      }
      mutate(entry);
      this.active = null;
      this.onChange();
      this.pump();
    };

    this.client(entry.question, settings, {
      onSnippet: (snippet: SnippetEvent) => {
        if (sealed || entry.status !== "streaming") {
          return;
        }
        entry.snippets.push(snippet);
        entry.sources.push({
          source_id: snippet.source_id,
          score: snippet.score,
          origin: snippet.origin,
          truncated: snippet.truncated,
        });
        this.onChange();
      },
      onToken: (text: string) => {
        if (entry.status !== "streaming") {
          return;
        }
        sealed = true;
        entry.answer_text += text;
        this.onChange();
      },
      onDone: (record: AnswerRecord) => {
        finalize((e) => {
          e.status = "done";
          e.answer_text = record.answer;
          e.sources = record.sources;
          e.translated_query = record.translated_query;
        });
      },
      onError: (stage: string, message: string) => {
        finalize((e) => {
          e.status = "error";
          e.error = { stage, message };
        });
      },
    }).then(
      () => {
        // The client promises exactly one terminal event; if it resolved
        // without one, the entry would hang — surface that as an error.
        finalize((e) => {
          e.status = "error";
          e.error = { stage: "stream", message: "stream ended without completion" };
        });
      },
      (err: unknown) => {
        finalize((e) => {
          e.status = "error";
          e.error = {
            stage: "network",
            message: err instanceof Error ? err.message : String(err),
          };
        });
      },
    );
  }
}
