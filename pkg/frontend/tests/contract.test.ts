/**
 * Contract tests: every request the client emits is replayed against the
 * documented schema and a stub service; the stub's behavior mirrors the
 * real endpoints (deterministic greedy responses, JSON errors with status
 * codes, classifier verdicts).
 */

import { afterEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { RespondRequestSchema } from "../src/schema.js";
import { ChatSession, verdictBadge } from "../src/state.js";
import { startStub, StubHandle } from "./stub_server.js";

let stub: StubHandle | null = null;

afterEach(async () => {
  if (stub) {
    await stub.close();
    stub = null;
  }
});

async function freshSession(options = {}): Promise<ChatSession> {
  stub = await startStub(options);
  const session = new ChatSession(new ApiClient(stub.baseUrl));
  await session.loadModels();
  return session;
}

describe("request contract", () => {
  it("every recorded request validates against the strict schema", async () => {
    const session = await freshSession();
    await session.sendTurn("how was the movie");
    session.setSentiment("negative");
    await session.sendTurn("and the food");
    expect(stub!.requests).toHaveLength(2);
    for (const recorded of stub!.requests) {
      expect(() => RespondRequestSchema.parse(recorded)).not.toThrow();
    }
  });

  it("sentiment toggle flips the request field", async () => {
    const session = await freshSession();
    session.setSentiment("negative");
    await session.sendTurn("tell me about the trip");
    session.setSentiment("positive");
    await session.sendTurn("and the hotel");
    const sentiments = (stub!.requests as { sentiment: string }[]).map((r) => r.sentiment);
    expect(sentiments).toEqual(["negative", "positive"]);
  });

  it("the toggle is sticky across turns until changed", async () => {
    const session = await freshSession();
    session.setSentiment("negative");
    await session.sendTurn("one");
    await session.sendTurn("two");
    const sentiments = (stub!.requests as { sentiment: string }[]).map((r) => r.sentiment);
    expect(sentiments).toEqual(["negative", "negative"]);
  });

  it("selected model flows into the request body", async () => {
    const session = await freshSession();
    session.selectModel("cvae-demo");
    await session.sendTurn("hello");
    expect((stub!.requests[0] as { model_id: string }).model_id).toBe("cvae-demo");
  });

  it("requests carry the full concatenated history", async () => {
    const session = await freshSession();
    await session.sendTurn("how was the movie");
    await session.sendTurn("nice and the food");
    const second = stub!.requests[1] as { history: string };
    expect(second.history).toContain("how was the movie");
    expect(second.history).toContain("nice and the food");
    // the model's reply is part of the conversation the service conditions on
    expect(second.history).toContain("(seq2seq-demo)");
  });
});

describe("session behavior against the stub service", () => {
  it("renders the model list the service returned", async () => {
    const session = await freshSession();
    expect(session.models.map((m) => m.model_id)).toEqual(["seq2seq-demo", "cvae-demo"]);
    expect(session.selectedModel).toBe("seq2seq-demo");
  });

  it("greedy resend of an identical transcript yields identical text", async () => {
    const a = await freshSession();
    await a.sendTurn("how was the movie");
    const first = a.turns[1]!.text;
    const b = new ChatSession(new ApiClient(stub!.baseUrl));
    await b.loadModels();
    await b.sendTurn("how was the movie");
    expect(b.turns[1]!.text).toBe(first);
  });

  it("model turns carry the verdict and badge logic compares it to the request", async () => {
    const session = await freshSession();
    session.setSentiment("negative");
    await session.sendTurn("the game");
    const turn = session.turns[1]!;
    expect(turn.speaker).toBe("model");
    if (turn.speaker === "model") {
      expect(turn.requested_sentiment).toBe("negative");
      expect(turn.classifier_verdict?.label).toBe("negative");
    }
    expect(verdictBadge(turn)).toBe("match");
  });

  it("mismatched verdicts get the mismatch badge", () => {
    expect(
      verdictBadge({
        speaker: "model",
        text: "x",
        requested_sentiment: "negative",
        classifier_verdict: { label: "positive", probability: 0.8 },
        model_id: "m",
      }),
    ).toBe("mismatch");
  });

  it("switching models preserves the transcript", async () => {
    const session = await freshSession();
    await session.sendTurn("hello there");
    const before = session.turns.length;
    session.selectModel("cvae-demo");
    expect(session.turns.length).toBe(before);
  });
});

describe("failure paths", () => {
  it("service down shows the banner and disables sending", async () => {
    const session = new ChatSession(new ApiClient("http://127.0.0.1:9"));
    await session.loadModels();
    expect(session.banner).not.toBeNull();
    expect(session.canSend).toBe(false);
    const outcome = await session.sendTurn("hello");
    expect(outcome.ok).toBe(false);
    expect(session.turns).toHaveLength(0);
  });

  it("a 4xx adds an inline error entry and keeps the transcript intact", async () => {
    const session = await freshSession({ failWith: { status: 400, error: "sentiment must be ..." } });
    const outcome = await session.sendTurn("hello");
    expect(outcome.ok).toBe(false);
    expect(session.turns).toHaveLength(0); // draft not consumed: retry possible
    expect(session.entries.some((e) => "kind" in e && e.kind === "error")).toBe(true);
    expect(session.banner).toBeNull(); // service is up, only the request failed
  });

  it("no client-side fallback text is ever invented", async () => {
    const session = await freshSession();
    await session.sendTurn("the concert");
    const modelTurn = session.turns[1]!;
    // all generated text comes verbatim from the service
    expect(modelTurn.text).toBe("the concert was great (seq2seq-demo)");
  });
});
