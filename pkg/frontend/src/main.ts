/** Page wiring: composer, settings, store, and re-rendering. */
import { streamAsk } from "./sse.js";
import { canSubmit, ChatStore } from "./state.js";
import { renderEntries, renderQueueNotice } from "./render.js";
import type { AskSettings, Backend } from "./types.js";

const transcript = document.getElementById("transcript") as HTMLElement;
const form = document.getElementById("composer") as HTMLFormElement;
const input = document.getElementById("question") as HTMLInputElement;
const submit = document.getElementById("submit") as HTMLButtonElement;
const backendSelect = document.getElementById("backend") as HTMLSelectElement;
const kInput = document.getElementById("k") as HTMLInputElement;
const queueNotice = document.getElementById("queue-notice") as HTMLElement;

// Served under /ui/, same origin as the API.
const store = new ChatStore((question, settings, handlers) =>
  streamAsk("", question, settings, handlers),
);

store.onChange = () => {
  renderEntries(transcript, store.entries);
  renderQueueNotice(queueNotice, store.queuedCount());
  transcript.scrollTop = transcript.scrollHeight;
};

function currentSettings(): AskSettings {
  return {
    backend: backendSelect.value as Backend,
    k: Number(kInput.value) || 5,
  };
}

function syncSubmitState(): void {
  submit.disabled = !canSubmit(input.value);
}

input.addEventListener("input", syncSubmitState);
syncSubmitState();

form.addEventListener("submit", (event) => {
  event.preventDefault();
  const entry = store.submit(input.value, currentSettings());
  if (entry !== null) {
    input.value = "";
    syncSubmitState();
  }
});
