/**
 * Session state: the transcript, the selected model, the per-turn sentiment
 * toggle, and the single-in-flight send loop. All generation decisions live
 * on the server; this module only assembles requests and folds responses
 * into the transcript.
 */

import { ApiClient, ApiError } from "./api.js";
import {
  ConversationTurn,
  ModelInfo,
  RespondRequest,
  Sentiment,
  Transcript,
  TranscriptSchema,
} from "./schema.js";

export interface InlineError {
  kind: "error";
  message: string;
}

export type TranscriptEntry = ConversationTurn | InlineError;

export interface SendOutcome {
  ok: boolean;
  error?: string;
}

export class ChatSession {
  models: ModelInfo[] = [];
  selectedModel: string | null = null;
  sentiment: Sentiment = "positive"; // sticky: each send keeps the last choice
  mode: "greedy" | "sample" = "greedy";
  seed = 0;
  entries: TranscriptEntry[] = [];
  inFlight = false;
  banner: string | null = null;

  constructor(private readonly api: ApiClient) {}

  get turns(): ConversationTurn[] {
    return this.entries.filter((e): e is ConversationTurn => !("kind" in e));
  }

  get canSend(): boolean {
    return this.selectedModel !== null && !this.inFlight && this.banner === null;
  }

  async loadModels(): Promise<void> {
    try {
      this.models = await this.api.fetchModels();
      this.banner = null;
      if (this.models.length > 0 && !this.models.some((m) => m.model_id === this.selectedModel)) {
        this.selectedModel = this.models[0]!.model_id;
      }
    } catch (err) {
      this.models = [];
      this.banner = err instanceof ApiError ? `cannot reach service: ${err.message}` : String(err);
    }
  }

  selectModel(modelId: string): void {
    if (!this.models.some((m) => m.model_id === modelId)) {
      throw new Error(`unknown model ${modelId}`);
    }
    this.selectedModel = modelId; // transcript survives model switches
  }

  setSentiment(sentiment: Sentiment): void {
    this.sentiment = sentiment;
  }

  /** The full concatenated history the service will condition on. */
  historyText(nextText: string): string {
    const prior = this.turns.map((t) => t.text).filter((t) => t.length > 0);
    return [...prior, nextText].join(" ");
  }

  buildRequest(text: string): RespondRequest {
    if (this.selectedModel === null) {
      throw new Error("no model selected");
    }
    return {
      history: this.historyText(text),
      sentiment: this.sentiment,
      model_id: this.selectedModel,
      mode: this.mode,
      seed: this.seed,
    };
  }

  /**
   * Send one turn. On success the human and model turns are appended; on
   * failure nothing is appended except an inline error entry, so the caller
   * keeps the draft text for retry.
   */
  async sendTurn(text: string): Promise<SendOutcome> {
    const trimmed = text.trim();
    if (trimmed.length === 0) {
      return { ok: false, error: "empty message" };
    }
    if (!this.canSend) {
      return { ok: false, error: this.inFlight ? "request already in flight" : "service unavailable" };
    }
    const request = this.buildRequest(trimmed);
    this.inFlight = true;
    try {
      const response = await this.api.respond(request);
      this.entries.push({ speaker: "human", text: trimmed });
      this.entries.push({
        speaker: "model",
        text: response.response,
        requested_sentiment: request.sentiment,
        classifier_verdict: response.classifier_sentiment,
        model_id: response.model_id,
      });
      return { ok: true };
    } catch (err) {
      const message = err instanceof ApiError ? err.message : String(err);
      this.entries.push({ kind: "error", message });
      if (err instanceof ApiError && err.status === null) {
        this.banner = `cannot reach service: ${err.message}`;
      }
      return { ok: false, error: message };
    } finally {
      this.inFlight = false;
    }
  }

  exportTranscript(): string {
    const transcript: Transcript = { version: 1, turns: this.turns };
    return JSON.stringify(transcript, null, 2);
  }

  importTranscript(jsonText: string): void {
    const transcript = TranscriptSchema.parse(JSON.parse(jsonText));
    this.entries = [...transcript.turns];
  }
}

/** Badge text for a model turn: did the classifier agree with the request? */
export function verdictBadge(turn: ConversationTurn): "match" | "mismatch" | "unscored" | null {
  if (turn.speaker !== "model") return null;
  if (turn.classifier_verdict === null) return "unscored";
  return turn.classifier_verdict.label === turn.requested_sentiment ? "match" : "mismatch";
}
