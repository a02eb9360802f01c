// Thin HTTP client over the annotation service.  The fetch implementation
// is injectable so tests can run against a stub or a live server alike.

import type {
  AnswerSubmission,
  NextTaskResponse,
  ProgressResponse,
  SubmitResult,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ status: number; json(): Promise<unknown> }>;

const STATUS_MAP: Record<number, SubmitResult["status"]> = {
  200: "recorded",
  400: "invalid",
  401: "unauthorized",
  404: "unknown-task",
  409: "conflict",
};

export class AnnotationApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = globalThis.fetch as unknown as FetchLike,
  ) {}

  async nextTask(annotator: string): Promise<NextTaskResponse> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/tasks/next?annotator=${encodeURIComponent(annotator)}`,
    );
    if (resp.status === 401) {
      throw new Error(`annotator not registered`);
    }
    if (resp.status !== 200) {
      throw new Error(`next-task failed with status ${resp.status}`);
    }
    return (await resp.json()) as NextTaskResponse;
  }

  async submitAnswer(submission: AnswerSubmission): Promise<SubmitResult> {
    const resp = await this.fetchImpl(`${this.baseUrl}/answers`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(submission),
    });
    const status = STATUS_MAP[resp.status] ?? "error";
    if (status === "recorded") {
      return { status };
    }
    const body = (await resp.json().catch(() => ({}))) as { error?: string };
    return { status, error: body.error };
  }

  async progress(): Promise<ProgressResponse> {
    const resp = await this.fetchImpl(`${this.baseUrl}/progress`);
    if (resp.status !== 200) {
      throw new Error(`progress failed with status ${resp.status}`);
    }
    return (await resp.json()) as ProgressResponse;
  }
}
