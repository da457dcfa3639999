import { describe, expect, it } from "vitest";

import { canSubmit, ChatStore } from "../src/state.js";
import type {
  AnswerRecord,
  AskClient,
  AskSettings,
  StreamHandlers,
} from "../src/types.js";

const SETTINGS: AskSettings = { backend: "semantic", k: 5 };

const RECORD: AnswerRecord = {
  answer: "iSpec is a spectroscopy framework.",
  sources: [
    { source_id: "2014A&A...569A.111B", score: 0.91, origin: "semantic", truncated: false },
  ],
  translated_query: null,
  timings_ms: { retrieval: 1, generation: 2, total: 3 },
  prompt_chars: 42,
};

function snippetEvent(id: string, score = 1.0) {
  return { text: `text of ${id}`, source_id: id, score, origin: "semantic", truncated: false };
}

/** Client that replays a script of handler calls, one microtask apart. */
function scriptedClient(script: (h: StreamHandlers) => void): AskClient {
  return async (_question, _settings, handlers) => {
    await Promise.resolve();
    script(handlers);
  };
}

describe("canSubmit", () => {
  it("requires nonempty trimmed text", () => {
    expect(canSubmit("")).toBe(false);
    expect(canSubmit("   \n\t")).toBe(false);
    expect(canSubmit("x")).toBe(true);
  });
});

describe("ChatStore.submit", () => {
  it("rejects empty input without creating an entry", () => {
    const store = new ChatStore(scriptedClient((h) => h.onDone(RECORD)));
    expect(store.submit("", SETTINGS)).toBeNull();
    expect(store.submit("   ", SETTINGS)).toBeNull();
    expect(store.entries).toHaveLength(0);
  });

  it("trims the question and records the backend used", async () => {
    const store = new ChatStore(scriptedClient((h) => h.onDone(RECORD)));
    const entry = store.submit("  what is iSpec?  ", { backend: "search", k: 3 });
    expect(entry?.question).toBe("what is iSpec?");
    expect(entry?.backend_used).toBe("search");
    await store.idle();
  });

  it("passes question and settings to the client verbatim, copied", async () => {
    let seen: { question: string; settings: AskSettings } | null = null;
    const client: AskClient = async (question, settings, handlers) => {
      seen = { question, settings };
      handlers.onDone(RECORD);
    };
    const store = new ChatStore(client);
    const mine: AskSettings = { backend: "hybrid", k: 9 };
    store.submit("q", mine);
    mine.k = 1; // caller mutation after submit must not leak in
    await store.idle();
    expect(seen).toEqual({ question: "q", settings: { backend: "hybrid", k: 9 } });
  });
});

describe("streaming lifecycle", () => {
  it("moves pending → streaming → done and adopts the done record", async () => {
    const statuses: string[] = [];
    const store = new ChatStore(
      scriptedClient((h) => {
        h.onSnippet(snippetEvent("2014A&A...569A.111B", 0.91));
        h.onToken("iSpec is ");
        h.onToken("a spectroscopy framework.");
        h.onDone(RECORD);
      }),
    );
    store.onChange = () => {
      const entry = store.entries[0];
      if (entry) statuses.push(entry.status);
    };
    const entry = store.submit("what is iSpec?", SETTINGS)!;
    expect(entry.status).toBe("streaming"); // dispatched immediately, nothing queued
    await store.idle();

    expect(entry.status).toBe("done");
    expect(entry.answer_text).toBe(RECORD.answer);
    expect(entry.sources).toEqual(RECORD.sources);
    expect(entry.snippets.map((s) => s.source_id)).toEqual(["2014A&A...569A.111B"]);
    // transitions are monotonic: once past a state, never back
    const order = ["pending", "streaming", "done"];
    const indices = statuses.map((s) => order.indexOf(s));
    expect(indices.every((v, i) => i === 0 || v >= indices[i - 1])).toBe(true);
  });

  it("accumulates token chunks into answer_text while streaming", async () => {
    const sizes: number[] = [];
    const store = new ChatStore(
      scriptedClient((h) => {
        h.onToken("one ");
        h.onToken("two ");
        h.onToken("three");
        h.onDone({ ...RECORD, answer: "one two three" });
      }),
    );
    store.onChange = () => {
      const entry = store.entries[0];
      if (entry?.status === "streaming") sizes.push(entry.answer_text.length);
    };
    store.submit("q", SETTINGS);
    await store.idle();
    expect(sizes).toContain("one ".length);
    expect(sizes).toContain("one two ".length);
    expect(store.entries[0].answer_text).toBe("one two three");
  });

  it("freezes sources once the answer starts streaming", async () => {
    const store = new ChatStore(
      scriptedClient((h) => {
        h.onSnippet(snippetEvent("A"));
        h.onToken("answer...");
        h.onSnippet(snippetEvent("B")); // out-of-order event: must be ignored
        h.onDone({ ...RECORD, sources: [snippetEvent("A")] });
      }),
    );
    store.submit("q", SETTINGS);
    await store.idle();
    expect(store.entries[0].snippets.map((s) => s.source_id)).toEqual(["A"]);
    expect(store.entries[0].sources.map((s) => s.source_id)).toEqual(["A"]);
  });

  it("marks the entry error with the stage label from the service", async () => {
    const store = new ChatStore(
      scriptedClient((h) => h.onError("generation", "backend down")),
    );
    const entry = store.submit("q", SETTINGS)!;
    await store.idle();
    expect(entry.status).toBe("error");
    expect(entry.error).toEqual({ stage: "generation", message: "backend down" });
  });

  it("ignores events arriving after a terminal state", async () => {
    const store = new ChatStore(
      scriptedClient((h) => {
        h.onDone(RECORD);
        h.onToken("late");
        h.onError("late", "late");
      }),
    );
    const entry = store.submit("q", SETTINGS)!;
    await store.idle();
    expect(entry.status).toBe("done");
    expect(entry.answer_text).toBe(RECORD.answer);
    expect(entry.error).toBeNull();
  });

  it("turns a rejected client promise into a network error entry", async () => {
    const store = new ChatStore(async () => {
      throw new Error("socket hangup");
    });
    const entry = store.submit("q", SETTINGS)!;
    await store.idle();
    expect(entry.status).toBe("error");
    expect(entry.error).toEqual({ stage: "network", message: "socket hangup" });
  });

  it("flags a client that resolves without any terminal event", async () => {
    const store = new ChatStore(async () => {});
    const entry = store.submit("q", SETTINGS)!;
    await store.idle();
    expect(entry.status).toBe("error");
    expect(entry.error?.stage).toBe("stream");
  });
});

describe("queue discipline", () => {
  function gatedClient() {
    const gates: Array<(r: AnswerRecord) => void> = [];
    const client: AskClient = (_question, _settings, handlers) =>
      new Promise<void>((resolve) => {
        gates.push((record) => {
          handlers.onDone(record);
          resolve();
        });
      });
    return { client, release: (record: AnswerRecord) => gates.shift()!(record) };
  }

  it("streams one question at a time and drains in order", async () => {
    const { client, release } = gatedClient();
    const store = new ChatStore(client);
    const a = store.submit("first", SETTINGS)!;
    const b = store.submit("second", SETTINGS)!;
    const c = store.submit("third", SETTINGS)!;

    expect(a.status).toBe("streaming");
    expect(b.status).toBe("pending");
    expect(c.status).toBe("pending");
    expect(store.streaming()).toBe(true);
    expect(store.queuedCount()).toBe(2);

    release({ ...RECORD, answer: "answer A" });
    expect(a.status).toBe("done");
    expect(b.status).toBe("streaming");
    expect(store.queuedCount()).toBe(1);

    release({ ...RECORD, answer: "answer B" });
    release({ ...RECORD, answer: "answer C" });
    await store.idle();
    expect([a.answer_text, b.answer_text, c.answer_text]).toEqual([
      "answer A",
      "answer B",
      "answer C",
    ]);
    expect(store.queuedCount()).toBe(0);
    expect(store.streaming()).toBe(false);
  });

  it("keeps draining the queue after an error", async () => {
    let call = 0;
    const client: AskClient = async (_q, _s, handlers) => {
      call += 1;
      if (call === 1) {
        handlers.onError("retrieval", "index offline");
      } else {
        handlers.onDone(RECORD);
      }
    };
    const store = new ChatStore(client);
    const bad = store.submit("first", SETTINGS)!;
    const good = store.submit("second", SETTINGS)!;
    await store.idle();
    expect(bad.status).toBe("error");
    expect(good.status).toBe("done");
  });
});
