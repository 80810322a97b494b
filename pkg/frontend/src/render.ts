import type { ChatState, Panel, TraceView } from "./state";
import type { UiMessage } from "./types";

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderMessage(msg: UiMessage): string {
  return (
    `<div class="msg msg-${msg.role}">` +
    `<span class="role">${msg.role.toUpperCase()}</span>` +
    `<span class="text">${escapeHtml(msg.text)}</span>` +
    `</div>`
  );
}

export function renderPanel(p: Panel): string {
  if (p.empty) {
    return (
      `<section class="panel panel-empty" data-panel="${p.id}">` +
      `<h3>${escapeHtml(p.heading)}</h3><p class="empty">(empty)</p></section>`
    );
  }
  const rows = p.rows
    .map(
      (r) =>
        `<li value="${r.rank}">${escapeHtml(r.title)}` +
        (r.note ? ` <em>${escapeHtml(r.note)}</em>` : "") +
        `</li>`,
    )
    .join("");
  return (
    `<section class="panel" data-panel="${p.id}">` +
    `<h3>${escapeHtml(p.heading)}</h3><ol>${rows}</ol></section>`
  );
}

export function renderTrace(view: TraceView): string {
  const badges = [
    view.coldStart ? `<span class="badge">cold start</span>` : "",
    view.retrievalShrank ? `<span class="badge">retrieval shrank</span>` : "",
    `<span class="badge">${view.llmCalls} LLM calls</span>`,
  ].join("");
  const warnings = view.warnings
    .map((w) => `<li class="warning">${escapeHtml(w)}</li>`)
    .join("");
  return (
    `<div class="trace">${badges}` +
    view.panels.map(renderPanel).join("") +
    (warnings ? `<ul class="warnings">${warnings}</ul>` : "") +
    `</div>`
  );
}

export function renderChat(state: ChatState): string {
  const messages = state.messages.map(renderMessage).join("");
  const error = state.error
    ? `<div class="error">${escapeHtml(state.error)}</div>`
    : "";
  return `<div class="chat">${messages}${error}</div>`;
}
