// Thin fetch wrappers over the session service JSON API.

import type {
  CloseResponse,
  EventsResponse,
  OpenResponse,
  RecordingsResponse,
  TurnResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  openSession(sessionId?: string): Promise<OpenResponse> {
    return request(`${this.baseUrl}/sessions`, {
      method: "POST",
      body: JSON.stringify(sessionId ? { session_id: sessionId } : {}),
    });
  }

  sendTurn(sessionId: string, text: string): Promise<TurnResponse> {
    return request(`${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/turns`, {
      method: "POST",
      body: JSON.stringify({ text }),
    });
  }

  getEvents(sessionId: string): Promise<EventsResponse> {
    return request(`${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}`);
  }

  getRecordings(sessionId: string): Promise<RecordingsResponse> {
    return request(`${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/recordings`);
  }

  closeSession(sessionId: string): Promise<CloseResponse> {
    return request(`${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/close`, {
      method: "POST",
    });
  }
}
