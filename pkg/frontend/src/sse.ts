/** Fetch-based Server-Sent-Events client for the ask stream.

Uses fetch + ReadableStream rather than EventSource so the same code
runs in the browser and under node-based tests, and so non-2xx
responses can surface the service's error envelope before any event
flows.
*/
import type {
  AnswerRecord,
  AskSettings,
  SnippetEvent,
  StreamHandlers,
} from "./types.js";

export interface SseFrame {
  event: string;
  data: string;
}

/** Parse SSE frames out of a byte stream (frames separated by blank lines). */
export async function* parseSseStream(
  body: ReadableStream<Uint8Array>,
): AsyncGenerator<SseFrame> {
  const reader = body.getReader();
  const decoder = new TextDecoder("utf-8");
  let buffer = "";
  try {
    while (true) {
      const { value, done } = await reader.read();
      if (done) {
        break;
      }
      buffer += decoder.decode(value, { stream: true });
      const frames = buffer.split(/\r?\n\r?\n/);
      buffer = frames.pop() ?? "";
      for (const frame of frames) {
        const parsed = parseFrame(frame);
        if (parsed !== null) {
          yield parsed;
        }
      }
    }
    const tail = parseFrame(buffer);
    if (tail !== null) {
      yield tail;
    }
  } finally {
    reader.releaseLock();
  }
}

function parseFrame(frame: string): SseFrame | null {
  let event = "message";
  const dataLines: string[] = [];
  for (const rawLine of frame.split(/\r?\n/)) {
    if (rawLine.startsWith("event:")) {
      event = rawLine.slice(6).trim();
    } else if (rawLine.startsWith("data:")) {
      dataLines.push(rawLine.slice(5).replace(/^ /, ""));
    }
  }
  if (dataLines.length === 0) {
    return null;
  }
  return { event, data: dataLines.join("\n") };
}

/** Open GET /v1/ask/stream and dispatch its events to the handlers.

Exactly one terminal handler fires: `onDone` for a completed answer,
`onError` for a pre-stream HTTP error, a mid-stream `error` event, a
stream that closes without `done`, or a network failure.
*/
export async function streamAsk(
  baseUrl: string,
  question: string,
  settings: AskSettings,
  handlers: StreamHandlers,
): Promise<void> {
  const params = new URLSearchParams({
    question,
    backend: settings.backend,
    k: String(settings.k),
  });
  let response: Response;
  try {
    response = await fetch(`${baseUrl}/v1/ask/stream?${params}`, {
      headers: { Accept: "text/event-stream" },
    });
  } catch (err) {
    handlers.onError("network", err instanceof Error ? err.message : String(err));
    return;
  }
  if (!response.ok) {
    let stage = `http_${response.status}`;
    let message = response.statusText || `HTTP ${response.status}`;
    try {
      const envelope = (await response.json()) as { stage?: string; error?: string };
      if (envelope.stage) stage = envelope.stage;
      if (envelope.error) message = envelope.error;
    } catch {
      // keep the status-derived fallback
    }
    handlers.onError(stage, message);
    return;
  }
  if (!response.body) {
    handlers.onError("stream", "response has no body");
    return;
  }

  let finished = false;
  try {
    for await (const frame of parseSseStream(response.body)) {
      const data = JSON.parse(frame.data);
      switch (frame.event) {
        case "snippet":
          handlers.onSnippet(data as SnippetEvent);
          break;
        case "token":
          handlers.onToken((data as { text: string }).text);
          break;
        case "done":
          finished = true;
          handlers.onDone(data as AnswerRecord);
          break;
        case "error":
          finished = true;
          handlers.onError(
            (data as { stage: string }).stage,
            (data as { error: string }).error,
          );
          break;
        default:
          // Unknown event types are ignored for forward compatibility.
          break;
      }
      if (finished) {
        break;
      }
    }
  } catch (err) {
    if (!finished) {
      handlers.onError("stream", err instanceof Error ? err.message : String(err));
    }
    return;
  }
  if (!finished) {
    handlers.onError("stream", "stream closed before a done event");
  }
}
