/**
 * Wire and transcript schemas.
 *
 * RespondRequest is strict: the client must send exactly the documented
 * fields, and the contract tests validate every recorded request against
 * this schema.
 */

import { z } from "zod";

export const SentimentSchema = z.enum(["positive", "negative"]);
export type Sentiment = z.infer<typeof SentimentSchema>;

export const RespondRequestSchema = z
  .object({
    history: z.string().min(1),
    sentiment: SentimentSchema,
    model_id: z.string().min(1),
    mode: z.enum(["greedy", "sample"]),
    seed: z.number().int(),
  })
  .strict();
export type RespondRequest = z.infer<typeof RespondRequestSchema>;

export const ClassifierVerdictSchema = z.object({
  label: SentimentSchema,
  probability: z.number().min(0).max(1),
});
export type ClassifierVerdict = z.infer<typeof ClassifierVerdictSchema>;

export const RespondResponseSchema = z.object({
  response: z.string(),
  tokens: z.array(z.number().int()),
  log_prob: z.number().max(0),
  classifier_sentiment: ClassifierVerdictSchema.nullable(),
  model_id: z.string(),
});
export type RespondResponse = z.infer<typeof RespondResponseSchema>;

export const ModelInfoSchema = z.object({
  model_id: z.string(),
  family: z.string(),
});
export const ModelsResponseSchema = z.object({
  models: z.array(ModelInfoSchema),
});
export type ModelInfo = z.infer<typeof ModelInfoSchema>;

export const HumanTurnSchema = z
  .object({
    speaker: z.literal("human"),
    text: z.string().min(1),
  })
  .strict();

export const ModelTurnSchema = z
  .object({
    speaker: z.literal("model"),
    text: z.string(),
    requested_sentiment: SentimentSchema,
    classifier_verdict: ClassifierVerdictSchema.nullable(),
    model_id: z.string(),
  })
  .strict();

export const ConversationTurnSchema = z.discriminatedUnion("speaker", [
  HumanTurnSchema,
  ModelTurnSchema,
]);
export type ConversationTurn = z.infer<typeof ConversationTurnSchema>;

export const TranscriptSchema = z.object({
  version: z.literal(1),
  turns: z.array(ConversationTurnSchema),
});
export type Transcript = z.infer<typeof TranscriptSchema>;
