// Thin typed client for the control API. All server access in the UI goes
// through this module; the fetch implementation is injectable so tests can
// stub the whole server.

import {
  AdvanceResponseSchema,
  CreateRunResponseSchema,
  EditAckSchema,
  GetRunResponseSchema,
  SCHEMA_VERSION,
  type EditAck,
  type OutlineEdit,
  type RunState,
} from "./types";

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`control API ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function detailOf(response: Response): Promise<string> {
  try {
    const body: unknown = await response.json();
    if (body && typeof body === "object" && "detail" in body) {
      return String((body as { detail: unknown }).detail);
    }
  } catch {
    // fall through to the status line
  }
  return response.statusText || `HTTP ${response.status}`;
}

export class ControlApi {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw new ApiError(response.status, await detailOf(response));
    }
    return response.json();
  }

  private post(path: string, body: unknown): Promise<unknown> {
    return this.request(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async createRun(
    premise: string | null,
    config: Record<string, unknown> = {},
  ): Promise<{ runId: string; stage: string }> {
    const body = await this.post("/runs", {
      schema_version: SCHEMA_VERSION,
      premise,
      config,
    });
    const parsed = CreateRunResponseSchema.parse(body);
    return { runId: parsed.run_id, stage: parsed.stage };
  }

  async getRun(runId: string): Promise<RunState> {
    const body = await this.request(`/runs/${runId}`);
    return GetRunResponseSchema.parse(body).state;
  }

  async submitEdits(runId: string, edits: OutlineEdit[]): Promise<EditAck> {
    const body = await this.post(`/runs/${runId}/edits`, {
      schema_version: SCHEMA_VERSION,
      edits,
    });
    return EditAckSchema.parse(body);
  }

  async advance(runId: string): Promise<string> {
    const body = await this.post(`/runs/${runId}/advance`, {});
    return AdvanceResponseSchema.parse(body).stage;
  }

  eventsUrl(runId: string): string {
    return `${this.baseUrl}/runs/${runId}/events`;
  }

  fetcher(): FetchLike {
    return this.fetchImpl;
  }
}
