import type { MessageResponse, SessionResponse } from "./types";

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let detail = resp.statusText;
  try {
    const body = (await resp.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(resp.status, detail);
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async createSession(): Promise<string> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/sessions`, {
      method: "POST",
    });
    if (!resp.ok) throw await parseError(resp);
    const body = (await resp.json()) as SessionResponse;
    return body.session_id;
  }

  async sendMessage(
    sessionId: string,
    text: string,
    k?: number,
    withTrace = true,
  ): Promise<MessageResponse> {
    const url =
      `${this.baseUrl}/v1/sessions/${encodeURIComponent(sessionId)}/messages` +
      `?trace=${withTrace}`;
    const payload: { text: string; k?: number } = { text };
    if (k !== undefined) payload.k = k;
    const resp = await this.fetchFn(url, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as MessageResponse;
  }
}
