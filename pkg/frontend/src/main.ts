import { ApiClient } from "./api.js";
import { ChatSession } from "./state.js";
import { render, UiElements, wire } from "./ui.js";

function grab<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("service") ?? "http://127.0.0.1:8642";
  const session = new ChatSession(new ApiClient(base));
  const elements: UiElements = {
    modelSelect: grab("model-select"),
    banner: grab("banner"),
    transcript: grab("transcript"),
    sentimentPositive: grab("sentiment-positive"),
    sentimentNegative: grab("sentiment-negative"),
    input: grab("input"),
    sendButton: grab("send"),
    exportButton: grab("export"),
    importInput: grab("import"),
  };
  wire(session, elements);
  await session.loadModels();
  render(session, elements);
}

void boot();
