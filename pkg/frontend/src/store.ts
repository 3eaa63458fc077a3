// View state derived purely from the server event log: reloading and
// refolding the same events reconstructs the identical view.

import type { ScoredQuad, SessionEvent, Speaker } from "./types.js";

export interface Message {
  speaker: Speaker;
  text: string;
  turnIndex: number;
  skill: string | null;
  processSignal: string | null;
}

export type SessionStatus = "open" | "warned" | "closed";

export interface SessionView {
  status: SessionStatus;
  messages: Message[];
  stamp: string;
  quads: ScoredQuad[];
  /** Gate result of the most recent turn; null before any turn ran. */
  gated: boolean | null;
  recording: Record<string, string> | null;
  warned: boolean;
  lastSignal: string | null;
}

export function emptyView(): SessionView {
  return {
    status: "open",
    messages: [],
    stamp: "",
    quads: [],
    gated: null,
    recording: null,
    warned: false,
    lastSignal: null,
  };
}

export function viewFromEvents(events: SessionEvent[]): SessionView {
  const view = emptyView();
  for (const event of events) {
    const p = event.payload as Record<string, any>;
    switch (event.event_type) {
      case "opened":
        view.messages.push({
          speaker: "counselor",
          text: String(p.opening_text ?? ""),
          turnIndex: 0,
          skill: null,
          processSignal: null,
        });
        break;
      case "client_turn":
        view.messages.push({
          speaker: "client",
          text: String(p.text ?? ""),
          turnIndex: Number(p.turn_index ?? -1),
          skill: null,
          processSignal: null,
        });
        break;
      case "counselor_turn":
        view.messages.push({
          speaker: "counselor",
          text: String(p.text ?? ""),
          turnIndex: Number(p.turn_index ?? -1),
          skill: typeof p.skill === "string" ? p.skill : null,
          processSignal: typeof p.process_signal === "string" ? p.process_signal : null,
        });
        view.stamp = String(p.stamp ?? "");
        view.quads = Array.isArray(p.retrieved) ? (p.retrieved as ScoredQuad[]) : [];
        view.gated = Boolean(p.gated);
        view.lastSignal = typeof p.process_signal === "string" ? p.process_signal : null;
        break;
      case "recording":
        view.recording = (p.sections as Record<string, string>) ?? null;
        break;
      case "warned":
        view.warned = true;
        view.status = "closed" === view.status ? view.status : "warned";
        break;
      case "closed":
        if (typeof p.closing_text === "string" && p.closing_text) {
          view.messages.push({
            speaker: "counselor",
            text: p.closing_text,
            turnIndex: -1,
            skill: null,
            processSignal: null,
          });
        }
        view.status = "closed";
        break;
    }
  }
  return view;
}
