/**
 * DOM layer: renders the session and wires events. Deliberately thin; all
 * behavior worth testing lives in state.ts and api.ts.
 */

import { ChatSession, verdictBadge } from "./state.js";

export interface UiElements {
  modelSelect: HTMLSelectElement;
  banner: HTMLElement;
  transcript: HTMLElement;
  sentimentPositive: HTMLInputElement;
  sentimentNegative: HTMLInputElement;
  input: HTMLInputElement;
  sendButton: HTMLButtonElement;
  exportButton: HTMLButtonElement;
  importInput: HTMLInputElement;
}

export function render(session: ChatSession, el: UiElements): void {
  el.modelSelect.innerHTML = "";
  for (const model of session.models) {
    const option = document.createElement("option");
    option.value = model.model_id;
    option.textContent = `${model.model_id} (${model.family})`;
    option.selected = model.model_id === session.selectedModel;
    el.modelSelect.appendChild(option);
  }
  el.modelSelect.disabled = session.models.length === 0;

  el.banner.textContent = session.banner ?? "";
  el.banner.hidden = session.banner === null;

  el.transcript.innerHTML = "";
  for (const entry of session.entries) {
    const row = document.createElement("div");
    if ("kind" in entry) {
      row.className = "turn error";
      row.textContent = `error: ${entry.message} (your message was kept; retry when ready)`;
    } else if (entry.speaker === "human") {
      row.className = "turn human";
      row.textContent = entry.text;
    } else {
      row.className = "turn model";
      const text = document.createElement("span");
      text.textContent = entry.text;
      row.appendChild(text);
      const badge = document.createElement("span");
      const verdict = verdictBadge(entry);
      badge.className = `badge ${verdict}`;
      const wanted = entry.requested_sentiment;
      if (verdict === "unscored") {
        badge.textContent = `asked ${wanted}`;
      } else {
        const got = entry.classifier_verdict!;
        badge.textContent = `asked ${wanted}, classifier ${got.label} ${(got.probability * 100).toFixed(0)}% [${verdict}]`;
      }
      row.appendChild(badge);
    }
    el.transcript.appendChild(row);
  }
  el.transcript.scrollTop = el.transcript.scrollHeight;

  el.sentimentPositive.checked = session.sentiment === "positive";
  el.sentimentNegative.checked = session.sentiment === "negative";
  el.sendButton.disabled = !session.canSend;
  el.exportButton.disabled = session.turns.length === 0;
}

export function wire(session: ChatSession, el: UiElements): void {
  el.modelSelect.addEventListener("change", () => {
    session.selectModel(el.modelSelect.value);
    render(session, el);
  });
  el.sentimentPositive.addEventListener("change", () => {
    if (el.sentimentPositive.checked) session.setSentiment("positive");
  });
  el.sentimentNegative.addEventListener("change", () => {
    if (el.sentimentNegative.checked) session.setSentiment("negative");
  });

  const send = async () => {
    const draft = el.input.value;
    render(session, el);
    const outcome = await session.sendTurn(draft);
    if (outcome.ok) {
      el.input.value = ""; // only a delivered message clears the box
    }
    render(session, el);
    el.input.focus();
  };
  el.sendButton.addEventListener("click", () => void send());
  el.input.addEventListener("keydown", (event) => {
    if (event.key === "Enter" && !session.inFlight) void send();
  });

  el.exportButton.addEventListener("click", () => {
    const blob = new Blob([session.exportTranscript()], { type: "application/json" });
    const url = URL.createObjectURL(blob);
    const link = document.createElement("a");
    link.href = url;
    link.download = "transcript.json";
    link.click();
    URL.revokeObjectURL(url);
  });
  el.importInput.addEventListener("change", async () => {
    const file = el.importInput.files?.[0];
    if (!file) return;
    try {
      session.importTranscript(await file.text());
      session.banner = null;
    } catch {
      session.banner = "transcript file did not validate";
    }
    el.importInput.value = "";
    render(session, el);
  });
}
