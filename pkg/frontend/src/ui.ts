// DOM rendering for the chat view and side panels. Panels are read-only
// mirrors of the latest turn; inputs are enabled/disabled here only.

import { RECORDING_SECTIONS } from "./types.js";
import type { Message, SessionView } from "./store.js";

export interface UiElements {
  messages: HTMLElement;
  banner: HTMLElement;
  errorBanner: HTMLElement;
  stampPanel: HTMLElement;
  knowledgePanel: HTMLElement;
  recordingPanel: HTMLElement;
  input: HTMLInputElement;
  sendButton: HTMLButtonElement;
  startButton: HTMLButtonElement;
  endButton: HTMLButtonElement;
}

export const GATED_OFF_NOTICE = "no retrieval (skill outside HS_wk)";
export const WARN_BANNER_TEXT = "The session is coming to an end.";
export const CLOSED_BANNER_TEXT = "Session closed.";

export function findElements(root: Document | HTMLElement): UiElements {
  const get = <T extends HTMLElement>(id: string): T => {
    const el = root.querySelector<T>(`#${id}`);
    if (!el) throw new Error(`missing element #${id}`);
    return el;
  };
  return {
    messages: get("messages"),
    banner: get("banner"),
    errorBanner: get("error-banner"),
    stampPanel: get("stamp-panel"),
    knowledgePanel: get("knowledge-panel"),
    recordingPanel: get("recording-panel"),
    input: get<HTMLInputElement>("chat-input"),
    sendButton: get<HTMLButtonElement>("send-btn"),
    startButton: get<HTMLButtonElement>("start-btn"),
    endButton: get<HTMLButtonElement>("end-btn"),
  };
}

function messageBubble(doc: Document, message: Message): HTMLElement {
  const bubble = doc.createElement("div");
  bubble.className = `bubble ${message.speaker}`;
  const text = doc.createElement("div");
  text.className = "bubble-text";
  text.textContent = message.text;
  bubble.appendChild(text);
  if (message.speaker === "counselor" && message.skill) {
    const badge = doc.createElement("span");
    badge.className = "skill-badge";
    badge.textContent = message.skill;
    bubble.appendChild(badge);
  }
  return bubble;
}

function renderKnowledge(doc: Document, view: SessionView, panel: HTMLElement): void {
  panel.replaceChildren();
  if (view.gated === false) {
    const notice = doc.createElement("div");
    notice.className = "gated-notice";
    notice.textContent = GATED_OFF_NOTICE;
    panel.appendChild(notice);
    return;
  }
  if (view.quads.length === 0) {
    const empty = doc.createElement("div");
    empty.className = "empty";
    empty.textContent = view.gated === null ? "—" : "no matching knowledge";
    panel.appendChild(empty);
    return;
  }
  const list = doc.createElement("ul");
  list.className = "quad-list";
  for (const quad of view.quads) {
    const item = doc.createElement("li");
    item.className = "quad";
    item.textContent = `[${quad.domain} | ${quad.slot} | ${quad.value} | ${quad.stamp ?? "-"}] (${quad.score.toFixed(3)})`;
    list.appendChild(item);
  }
  panel.appendChild(list);
}

function renderRecording(doc: Document, view: SessionView, panel: HTMLElement): void {
  panel.replaceChildren();
  if (!view.recording) {
    const empty = doc.createElement("div");
    empty.className = "empty";
    empty.textContent = "—";
    panel.appendChild(empty);
    return;
  }
  for (const [key, label] of RECORDING_SECTIONS) {
    const details = doc.createElement("details");
    details.className = "recording-section";
    const summary = doc.createElement("summary");
    summary.textContent = label;
    const body = doc.createElement("p");
    body.textContent = view.recording[key] ?? "";
    details.appendChild(summary);
    details.appendChild(body);
    panel.appendChild(details);
  }
}

export function render(view: SessionView, ui: UiElements): void {
  const doc = ui.messages.ownerDocument;

  ui.messages.replaceChildren(...view.messages.map((m) => messageBubble(doc, m)));

  if (view.status === "closed") {
    ui.banner.textContent = CLOSED_BANNER_TEXT;
    ui.banner.className = "banner closed visible";
  } else if (view.warned) {
    ui.banner.textContent = WARN_BANNER_TEXT;
    ui.banner.className = "banner warn visible";
  } else {
    ui.banner.textContent = "";
    ui.banner.className = "banner hidden";
  }

  ui.stampPanel.textContent = view.stamp || "—";
  renderKnowledge(doc, view, ui.knowledgePanel);
  renderRecording(doc, view, ui.recordingPanel);

  const closed = view.status === "closed";
  ui.input.disabled = closed;
  ui.sendButton.disabled = closed;
  ui.endButton.disabled = closed;
}

export function showError(ui: UiElements, message: string): void {
  ui.errorBanner.textContent = message;
  ui.errorBanner.className = "banner error visible";
}

export function clearError(ui: UiElements): void {
  ui.errorBanner.textContent = "";
  ui.errorBanner.className = "banner hidden";
}
