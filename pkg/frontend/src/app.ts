// Browser wiring: binds the pure state/render modules to the DOM.

import { ApiClient, ApiError } from "./api";
import {
  buildTraceView,
  clampK,
  initialState,
  withError,
  withReply,
  withUserMessage,
  type ChatState,
} from "./state";
import { renderChat, renderTrace } from "./render";

export function startApp(root: Document, client = new ApiClient()): void {
  let state: ChatState = initialState();
  const chatEl = root.getElementById("chat")!;
  const traceEl = root.getElementById("trace")!;
  const input = root.getElementById("input") as HTMLInputElement;
  const sendBtn = root.getElementById("send") as HTMLButtonElement;
  const newBtn = root.getElementById("new-session") as HTMLButtonElement;
  const slider = root.getElementById("k-slider") as HTMLInputElement;
  const kLabel = root.getElementById("k-value")!;
  const traceToggle = root.getElementById("trace-toggle") as HTMLInputElement;

  function paint(): void {
    chatEl.innerHTML = renderChat(state);
    traceEl.innerHTML =
      state.showTrace && state.lastTrace
        ? renderTrace(buildTraceView(state.lastTrace))
        : "";
    kLabel.textContent = String(state.k);
    // one in-flight request per session: input disabled while pending
    input.disabled = state.pending;
    sendBtn.disabled = state.pending || !input.value.trim();
  }

  async function ensureSession(): Promise<string> {
    if (state.sessionId) return state.sessionId;
    const sid = await client.createSession();
    state = { ...state, sessionId: sid };
    return sid;
  }

  async function send(): Promise<void> {
    const text = input.value.trim();
    if (!text || state.pending) return;
    input.value = "";
    state = withUserMessage(state, text, Date.now());
    paint();
    try {
      const sid = await ensureSession();
      const resp = await client.sendMessage(sid, text, state.k, true);
      state = withReply(state, resp, Date.now());
    } catch (err) {
      const message =
        err instanceof ApiError
          ? err.message
          : "offline: could not reach the recommender";
      state = withError(state, message);
    }
    paint();
  }

  sendBtn.addEventListener("click", () => void send());
  input.addEventListener("keydown", (e) => {
    if (e.key === "Enter") void send();
  });
  input.addEventListener("input", paint);
  slider.addEventListener("input", () => {
    state = { ...state, k: clampK(Number(slider.value)) };
    paint();
  });
  traceToggle.addEventListener("change", () => {
    state = { ...state, showTrace: traceToggle.checked };
    paint();
  });
  newBtn.addEventListener("click", () => {
    state = { ...initialState(), k: state.k, showTrace: state.showTrace };
    paint();
  });

  paint();
}

if (typeof document !== "undefined" && document.getElementById("chat")) {
  startApp(document);
}
