import type { MessageResponse, Trace, UiMessage } from "./types";

// The K slider covers the evaluation grid 0..35.
export const K_MIN = 0;
export const K_MAX = 35;

export function clampK(k: number): number {
  if (!Number.isFinite(k)) return K_MIN;
  return Math.min(K_MAX, Math.max(K_MIN, Math.round(k)));
}

export interface ChatState {
  sessionId: string | null;
  messages: UiMessage[];
  lastTrace: Trace | null;
  k: number;
  showTrace: boolean;
  pending: boolean;
  error: string | null;
}

export function initialState(): ChatState {
  return {
    sessionId: null,
    messages: [],
    lastTrace: null,
    k: 5,
    showTrace: true,
    pending: false,
    error: null,
  };
}

export function withUserMessage(
  state: ChatState,
  text: string,
  now: number,
): ChatState {
  return {
    ...state,
    pending: true,
    error: null,
    messages: [...state.messages, { role: "user", text, timestamp: now }],
  };
}

export function withReply(
  state: ChatState,
  resp: MessageResponse,
  now: number,
): ChatState {
  const reply = resp.recommendations.slice(0, 5).join("; ");
  return {
    ...state,
    pending: false,
    lastTrace: resp.trace ?? null,
    messages: [
      ...state.messages,
      { role: "system", text: `Recommendations: ${reply}`, timestamp: now },
    ],
  };
}

export function withError(state: ChatState, message: string): ChatState {
  return { ...state, pending: false, error: message };
}

// --- trace panels -----------------------------------------------------------

export interface PanelRow {
  rank: number;
  title: string;
  note: string;
}

export interface Panel {
  id: string;
  heading: string;
  rows: PanelRow[];
  empty: boolean;
}

export interface TraceView {
  panels: Panel[];
  retrievalShrank: boolean;
  coldStart: boolean;
  llmCalls: number;
  warnings: string[];
}

function panel(id: string, heading: string, rows: PanelRow[]): Panel {
  return { id, heading, rows, empty: rows.length === 0 };
}

// Renders exactly what the service returned; no client-side ranking.
export function buildTraceView(trace: Trace): TraceView {
  const query = trace.query_items.map((item, i) => ({
    rank: i + 1,
    title: item.title,
    note: trace.cold_start ? "seeded" : "mentioned",
  }));
  const raw = trace.raw_retrieval.map((item, i) => ({
    rank: i + 1,
    title: item.title,
    note: item.score.toFixed(3),
  }));
  const reflectedIds = new Set(
    trace.reflected_retrieval.map((item) => item.catalog_id),
  );
  const reflected = trace.raw_retrieval
    .filter((item) => reflectedIds.has(item.catalog_id))
    .map((item, i) => ({ rank: i + 1, title: item.title, note: "kept" }));
  const preRerank = trace.raw_recs.map((item, i) => ({
    rank: i + 1,
    title: item.title,
    note: "",
  }));
  const postRerank = trace.final_recs.map((item, i) => ({
    rank: i + 1,
    title: item.title,
    note: `score ${trace.rerank_scores[String(item.catalog_id)] ?? 0}`,
  }));
  return {
    panels: [
      panel("query", "Query items", query),
      panel("retrieval", "Retrieved (raw)", raw),
      panel("reflected", "Retrieved (after reflection)", reflected),
      panel("pre-rerank", "Generated (pre-rerank)", preRerank),
      panel("post-rerank", "Final (post-rerank)", postRerank),
    ],
    retrievalShrank:
      trace.reflected_retrieval.length < trace.raw_retrieval.length,
    coldStart: trace.cold_start,
    llmCalls: trace.llm_calls,
    warnings: trace.warnings,
  };
}
