/**
 * Thin typed client over the inference service. The fetch implementation is
 * injectable so tests can record requests or simulate outages; responses are
 * validated against the wire schemas before they reach session state.
 */

import {
  ModelInfo,
  ModelsResponseSchema,
  RespondRequest,
  RespondResponse,
  RespondResponseSchema,
} from "./schema.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number | null,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async fetchModels(): Promise<ModelInfo[]> {
    let res: Response;
    try {
      res = await this.fetchImpl(`${this.baseUrl}/v1/models`);
    } catch {
      throw new ApiError("service unreachable", null);
    }
    if (!res.ok) {
      throw new ApiError(`model listing failed (${res.status})`, res.status);
    }
    return ModelsResponseSchema.parse(await res.json()).models;
  }

  async respond(request: RespondRequest): Promise<RespondResponse> {
    let res: Response;
    try {
      res = await this.fetchImpl(`${this.baseUrl}/v1/respond`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(request),
      });
    } catch {
      throw new ApiError("service unreachable", null);
    }
    if (!res.ok) {
      let detail = `request failed (${res.status})`;
      try {
        const body = (await res.json()) as { error?: string };
        if (body.error) detail = body.error;
      } catch {
        // non-JSON error body; keep the status message
      }
      throw new ApiError(detail, res.status);
    }
    return RespondResponseSchema.parse(await res.json());
  }
}
