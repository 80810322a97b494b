import { describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api";
import fixture from "./fixtures/showcase.json";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("ApiClient", () => {
  it("creates a session", async () => {
    const fetchFn = vi
      .fn()
      .mockResolvedValue(jsonResponse({ api: 1, session_id: "abc123" }));
    const client = new ApiClient("http://svc", fetchFn);
    expect(await client.createSession()).toBe("abc123");
    expect(fetchFn).toHaveBeenCalledWith("http://svc/v1/sessions", {
      method: "POST",
    });
  });

  it("posts messages with the k override and trace flag", async () => {
    const fetchFn = vi.fn().mockResolvedValue(jsonResponse(fixture.k5));
    const client = new ApiClient("", fetchFn);
    const resp = await client.sendMessage("sid", "hello", 0, false);
    expect(resp.recommendations[0]).toBe("Elite Squad");
    const [url, init] = fetchFn.mock.calls[0]!;
    expect(url).toBe("/v1/sessions/sid/messages?trace=false");
    expect(JSON.parse((init as RequestInit).body as string)).toEqual({
      text: "hello",
      k: 0,
    });
  });

  it("omits k when not overridden", async () => {
    const fetchFn = vi.fn().mockResolvedValue(jsonResponse(fixture.k5));
    await new ApiClient("", fetchFn).sendMessage("sid", "hi");
    const [, init] = fetchFn.mock.calls[0]!;
    expect(JSON.parse((init as RequestInit).body as string)).toEqual({
      text: "hi",
    });
  });

  it("raises ApiError with the service detail on 4xx", async () => {
    const fetchFn = vi
      .fn()
      .mockImplementation(async () =>
        jsonResponse({ detail: "unknown session" }, 404),
      );
    const client = new ApiClient("", fetchFn);
    await expect(client.sendMessage("nope", "hi")).rejects.toThrowError(
      ApiError,
    );
    await expect(client.sendMessage("nope", "hi")).rejects.toThrow(
      "HTTP 404: unknown session",
    );
  });

  it("handles non-JSON error bodies", async () => {
    const fetchFn = vi.fn().mockResolvedValue(
      new Response("gateway timeout", { status: 503, statusText: "Unavailable" }),
    );
    await expect(
      new ApiClient("", fetchFn).createSession(),
    ).rejects.toThrow("HTTP 503");
  });
});
