import { describe, expect, it } from "vitest";

import {
  buildTraceView,
  clampK,
  initialState,
  withError,
  withReply,
  withUserMessage,
} from "../src/state";
import type { MessageResponse, Trace } from "../src/types";
import fixture from "./fixtures/showcase.json";

const showcase = fixture.k5 as MessageResponse;
const showcaseZeroK = fixture.k0 as MessageResponse;

describe("K slider", () => {
  it("clamps to the 0-35 grid", () => {
    expect(clampK(-3)).toBe(0);
    expect(clampK(0)).toBe(0);
    expect(clampK(17.4)).toBe(17);
    expect(clampK(35)).toBe(35);
    expect(clampK(99)).toBe(35);
    expect(clampK(NaN)).toBe(0);
  });
});

describe("chat state", () => {
  it("appends messages in arrival order", () => {
    let s = initialState();
    s = withUserMessage(s, "hello", 1);
    s = withReply(s, showcase, 2);
    expect(s.messages.map((m) => m.role)).toEqual(["user", "system"]);
    expect(s.messages[1]!.text).toContain("Elite Squad");
    expect(s.pending).toBe(false);
  });

  it("marks pending while the request is in flight", () => {
    const s = withUserMessage(initialState(), "hi", 1);
    expect(s.pending).toBe(true);
  });

  it("keeps the service's ranking verbatim in the reply", () => {
    const s = withReply(initialState(), showcase, 1);
    expect(s.messages[0]!.text).toBe(
      "Recommendations: Elite Squad; Elite Squad 2; The Enemy Within; " +
        "Parasite; Central Station",
    );
  });

  it("stores errors without losing history", () => {
    let s = withUserMessage(initialState(), "hi", 1);
    s = withError(s, "HTTP 503: retries exhausted");
    expect(s.error).toContain("503");
    expect(s.messages).toHaveLength(1);
    expect(s.pending).toBe(false);
  });
});

describe("trace view", () => {
  it("ranks Elite Squad first after rerank on the scripted query", () => {
    const view = buildTraceView(showcase.trace as Trace);
    const final = view.panels.find((p) => p.id === "post-rerank")!;
    expect(final.rows[0]!.title).toBe("Elite Squad");
    expect(final.rows.map((r) => r.title)).toContain("The Enemy Within");
  });

  it("shows the retrieval shrinking after context reflection", () => {
    const view = buildTraceView(showcase.trace as Trace);
    const raw = view.panels.find((p) => p.id === "retrieval")!;
    const reflected = view.panels.find((p) => p.id === "reflected")!;
    expect(raw.rows).toHaveLength(5);
    expect(reflected.rows.length).toBeLessThan(raw.rows.length);
    expect(reflected.rows.map((r) => r.title)).toEqual(["The Enemy Within"]);
    expect(view.retrievalShrank).toBe(true);
  });

  it("renders empty retrieval panels when K=0", () => {
    const view = buildTraceView(showcaseZeroK.trace as Trace);
    expect(view.panels.find((p) => p.id === "retrieval")!.empty).toBe(true);
    expect(view.panels.find((p) => p.id === "reflected")!.empty).toBe(true);
    expect(view.panels.find((p) => p.id === "post-rerank")!.empty).toBe(false);
  });

  it("mirrors pre- and post-rerank orders exactly as returned", () => {
    const trace = showcase.trace as Trace;
    const view = buildTraceView(trace);
    const pre = view.panels.find((p) => p.id === "pre-rerank")!;
    const post = view.panels.find((p) => p.id === "post-rerank")!;
    expect(pre.rows.map((r) => r.title)).toEqual(
      trace.raw_recs.map((i) => i.title),
    );
    expect(post.rows.map((r) => r.title)).toEqual(
      trace.final_recs.map((i) => i.title),
    );
  });

  it("surfaces warnings and the LLM call count", () => {
    const view = buildTraceView(showcase.trace as Trace);
    expect(view.llmCalls).toBe(3);
    expect(view.warnings.join(" ")).toContain("Roma");
  });
});
