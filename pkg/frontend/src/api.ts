import type { NextTaskPayload, Progress, ResponsePayload } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Server-reported error ({code, message} body with an HTTP status). */
export class ApiError extends Error {
  constructor(
    readonly code: string,
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function readError(response: Response): Promise<ApiError> {
  let code = "HTTP_ERROR";
  let message = `HTTP ${response.status}`;
  try {
    const body = await response.json();
    if (body && typeof body.code === "string") {
      code = body.code;
      message = body.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the generic code
  }
  return new ApiError(code, response.status, message);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    if (!response.ok) throw await readError(response);
    return (await response.json()) as T;
  }

  nextTask(judgeId: string): Promise<NextTaskPayload> {
    return this.get(`/api/tasks/next?judge=${encodeURIComponent(judgeId)}`);
  }

  progress(judgeId: string): Promise<Progress> {
    return this.get(`/api/progress?judge=${encodeURIComponent(judgeId)}`);
  }

  async submitResponse(payload: ResponsePayload): Promise<void> {
    const response = await this.fetchFn(`${this.baseUrl}/api/responses`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) throw await readError(response);
  }
}
