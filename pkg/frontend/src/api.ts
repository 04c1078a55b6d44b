// Thin typed client for the study service HTTP API.

import {
  RatingPayload,
  SequenceManifest,
  SessionPlan,
  TrialRef,
  assertManifest,
  assertPlan,
} from "./schema.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type SubmitOutcome = "created" | "duplicate";

export class ApiClient {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly baseUrl: string = "",
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  private async getJson(path: string): Promise<unknown> {
    const resp = await this.fetchFn(this.url(path));
    if (!resp.ok) {
      throw new ApiError(resp.status, await describeError(resp));
    }
    return resp.json();
  }

  async fetchPlan(participantId: string): Promise<SessionPlan> {
    const query = new URLSearchParams({ participant: participantId });
    return assertPlan(await this.getJson(`/api/plan?${query}`));
  }

  async fetchManifest(trial: TrialRef): Promise<SequenceManifest> {
    return assertManifest(await this.getJson(`${trial.stimulus}/manifest`));
  }

  frameUrl(trial: TrialRef, index: number): string {
    return this.url(`${trial.stimulus}/frames/${index}`);
  }

  /** 201 -> "created", 409 -> "duplicate", anything else throws. */
  async submitRating(payload: RatingPayload): Promise<SubmitOutcome> {
    const resp = await this.fetchFn(this.url("/api/ratings"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (resp.status === 201) return "created";
    if (resp.status === 409) return "duplicate";
    throw new ApiError(resp.status, await describeError(resp));
  }

  async exportCsv(): Promise<string> {
    const resp = await this.fetchFn(this.url("/api/export.csv"));
    if (!resp.ok) {
      throw new ApiError(resp.status, await describeError(resp));
    }
    return resp.text();
  }
}

async function describeError(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { error?: string };
    if (body && typeof body.error === "string") return body.error;
  } catch {
    // non-JSON error body
  }
  return `request failed with status ${resp.status}`;
}
