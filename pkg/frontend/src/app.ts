// Controller: wires the API client to the event-log store and the DOM.
// After every server action the app refetches the event log and re-renders,
// so what's on screen is always a pure function of the server's events.

import { ApiClient, ApiError } from "./api.js";
import { emptyView, viewFromEvents } from "./store.js";
import { clearError, findElements, render, showError, UiElements } from "./ui.js";

export class ChatApp {
  readonly ui: UiElements;
  sessionId: string | null = null;
  private inflight = false;

  constructor(root: Document | HTMLElement, private api: ApiClient) {
    this.ui = findElements(root);
    this.ui.startButton.addEventListener("click", () => void this.start());
    this.ui.endButton.addEventListener("click", () => void this.end());
    this.ui.sendButton.addEventListener("click", () => void this.send());
    this.ui.input.addEventListener("keydown", (event) => {
      if ((event as KeyboardEvent).key === "Enter") void this.send();
    });
    this.renderIdle();
  }

  private renderIdle(): void {
    render(emptyView(), this.ui);
    // No session yet: everything but "start" stays off.
    this.ui.input.disabled = true;
    this.ui.sendButton.disabled = true;
    this.ui.endButton.disabled = true;
  }

  /** Refetch the event log and rebuild the view from scratch. */
  async refresh(): Promise<void> {
    if (!this.sessionId) return;
    const data = await this.api.getEvents(this.sessionId);
    render(viewFromEvents(data.events), this.ui);
    if (!this.inflight) this.ui.sendButton.disabled = this.ui.input.disabled;
  }

  async start(): Promise<void> {
    if (this.sessionId) return;
    clearError(this.ui);
    try {
      const opened = await this.api.openSession();
      this.sessionId = opened.session_id;
      await this.refresh();
    } catch (error) {
      this.reportError(error);
    }
  }

  async send(): Promise<void> {
    if (!this.sessionId || this.inflight) return;
    const text = this.ui.input.value.trim();
    if (!text) return;
    clearError(this.ui);
    this.inflight = true;
    this.ui.sendButton.disabled = true;
    try {
      await this.api.sendTurn(this.sessionId, text);
      this.ui.input.value = "";
    } catch (error) {
      // Keep the typed message so the user can retry.
      this.reportError(error);
    } finally {
      this.inflight = false;
    }
    try {
      await this.refresh();
    } catch (error) {
      this.reportError(error);
    }
  }

  async end(): Promise<void> {
    if (!this.sessionId) return;
    clearError(this.ui);
    try {
      await this.api.closeSession(this.sessionId);
    } catch (error) {
      this.reportError(error);
    }
    try {
      await this.refresh();
    } catch (error) {
      this.reportError(error);
    }
  }

  private reportError(error: unknown): void {
    if (error instanceof ApiError) {
      showError(this.ui, `${error.status}: ${error.message}`);
    } else {
      showError(this.ui, String(error));
    }
  }
}

export function mount(root: Document | HTMLElement, baseUrl = ""): ChatApp {
  return new ChatApp(root, new ApiClient(baseUrl));
}
