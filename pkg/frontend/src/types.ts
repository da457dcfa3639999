/** Wire types mirroring the service's JSON payloads, plus UI state. */

export type Backend = "search" | "semantic" | "hybrid";

export interface AskSettings {
  backend: Backend;
  k: number;
}

/** One source row, exactly as the answer record carries it. */
export interface SourceRef {
  source_id: string;
  score: number;
  origin: string;
  truncated: boolean;
}

/** `snippet` SSE event payload: a source row plus the grounded text. */
export interface SnippetEvent extends SourceRef {
  text: string;
}

/** `done` SSE event payload / POST /v1/ask response body. */
export interface AnswerRecord {
  answer: string;
  sources: SourceRef[];
  translated_query: string | null;
  timings_ms: Record<string, number>;
  prompt_chars: number;
}

export type EntryStatus = "pending" | "streaming" | "done" | "error";

/** One question/answer exchange as the UI tracks it. */
export interface ChatEntry {
  id: number;
  question: string;
  backend_used: string;
  status: EntryStatus;
  /** Grows chunk by chunk during streaming; replaced by the final answer. */
  answer_text: string;
  sources: SourceRef[];
  /** Snippet texts keyed by arrival order, for grounding inspection. */
  snippets: SnippetEvent[];
  translated_query: string | null;
  error: { stage: string; message: string } | null;
}

export interface StreamHandlers {
  onSnippet(snippet: SnippetEvent): void;
  onToken(text: string): void;
  onDone(record: AnswerRecord): void;
  onError(stage: string, message: string): void;
}

/** Opens one ask stream and dispatches its events; resolves when closed. */
export type AskClient = (
  question: string,
  settings: AskSettings,
  handlers: StreamHandlers,
) => Promise<void>;
