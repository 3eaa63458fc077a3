// JSON shapes of the session service API.

export type Speaker = "client" | "counselor";

export type ProcessSignal = "continue" | "warn_ending" | "end";

export interface ScoredQuad {
  domain: string;
  slot: string;
  value: string;
  stamp: string | null;
  score: number;
}

export type EventType =
  | "opened"
  | "client_turn"
  | "counselor_turn"
  | "recording"
  | "warned"
  | "closed";

export interface SessionEvent {
  event_type: EventType;
  payload: Record<string, unknown>;
  sequence: number;
  timestamp: number;
}

export interface UtteranceRef {
  turn_index: number;
  text: string;
}

export interface OpenResponse {
  session_id: string;
  opening: UtteranceRef;
  status: string;
}

export interface TurnResponse {
  session_id: string;
  status: string;
  response: UtteranceRef;
  skill: string;
  used_context: boolean;
  truncated: boolean;
  degraded: boolean;
  state: Record<string, string | null>;
  stamp: string;
  retrieval: { gated: boolean; quadruples: ScoredQuad[] };
  recording: Record<string, string> | null;
  process_signal: ProcessSignal;
  closing: UtteranceRef | null;
}

export interface EventsResponse {
  session_id: string;
  status: string;
  events: SessionEvent[];
}

export interface RecordingsResponse {
  session_id: string;
  recordings: { turn_index: number; sections: Record<string, string> }[];
}

export interface CloseResponse {
  session_id: string;
  status: string;
  closing: UtteranceRef;
}

// Fixed display order of the six case-recording sections.
export const RECORDING_SECTIONS: [key: string, label: string][] = [
  ["explicit_content", "Explicit Content"],
  ["implicit_content", "Implicit Content"],
  ["defense_barriers", "Defense and Barriers to Change"],
  ["distortions", "Distortion"],
  ["countertransference", "Countertransference"],
  ["personal_assessment", "Personal Assessment"],
];
