/** Chat view state machine: live chat with the served bot, error-type
 * selection, Fix Response, and Save Dialogue.
 *
 * Every system bubble rendered comes verbatim from a service response; the
 * client never fabricates dialogue content. State only mutates on service
 * acknowledgment — a failed request leaves the persisted view unchanged. */

import type {
  FixReply,
  MessageReply,
  Metadata,
  SaveSummary,
  SessionStart,
  Speaker,
} from "./types.js";
import type { Transport } from "./transport.js";

export interface Bubble {
  speaker: Speaker;
  text: string;
}

export type ConnectionStatus = "idle" | "in_flight" | "error";

export class ChatView {
  sessionId: string | null = null;
  turns: Bubble[] = [];
  errorTypes: string[] = [];
  selectedErrorType: string | null = null;
  fixBadge = 0;
  connectionStatus: ConnectionStatus = "idle";
  errorBanner: string | null = null;
  saveSummary: SaveSummary | null = null;
  closed = false;

  constructor(private readonly transport: Transport) {}

  /** Send/Fix/Save are disabled while a request is in flight or after save. */
  get inputEnabled(): boolean {
    return this.sessionId !== null && !this.closed && this.connectionStatus !== "in_flight";
  }

  /** Fix is additionally enabled only when the last bubble is a system turn
   * and an error type has been selected. */
  get fixEnabled(): boolean {
    return (
      this.inputEnabled &&
      this.selectedErrorType !== null &&
      this.turns.length > 0 &&
      this.turns[this.turns.length - 1].speaker === "system"
    );
  }

  selectErrorType(errorType: string | null): void {
    if (errorType !== null && !this.errorTypes.includes(errorType)) {
      throw new Error(`unknown error type: ${errorType}`);
    }
    this.selectedErrorType = errorType;
  }

  async loadMetadata(): Promise<void> {
    const meta = (await this.transport.request("GET", "/metadata")) as Metadata;
    this.errorTypes = meta.error_types;
  }

  async startSession(): Promise<void> {
    if (this.sessionId !== null) {
      throw new Error("session already started");
    }
    const started = await this.guarded<SessionStart>(() =>
      this.transport.request("POST", "/session") as Promise<SessionStart>,
    );
    if (started === null) return;
    this.sessionId = started.session_id;
    this.turns = [{ speaker: "system", text: started.greeting.text }];
  }

  async chatSend(text: string): Promise<void> {
    if (!this.inputEnabled) return;
    // optimistic user bubble, reconciled (rolled back) on failure
    const optimistic: Bubble = { speaker: "user", text };
    this.turns.push(optimistic);
    const reply = await this.guarded<MessageReply>(() =>
      this.transport.request("POST", `/session/${this.sessionId}/message`, {
        text,
      }) as Promise<MessageReply>,
    );
    if (reply === null) {
      this.turns.pop();
      return;
    }
    this.turns.push({ speaker: "system", text: reply.turn.text });
  }

  async fixClicked(): Promise<void> {
    if (!this.fixEnabled) return;
    const reply = await this.guarded<FixReply>(() =>
      this.transport.request("POST", `/session/${this.sessionId}/fix`, {
        error_type: this.selectedErrorType,
      }) as Promise<FixReply>,
    );
    if (reply === null) return;
    // replace exactly the last system bubble, in place
    this.turns[this.turns.length - 1] = { speaker: "system", text: reply.turn.text };
    this.fixBadge += 1;
    this.selectedErrorType = null;
  }

  async saveClicked(): Promise<void> {
    if (!this.inputEnabled) return;
    const summary = await this.guarded<SaveSummary>(() =>
      this.transport.request("POST", `/session/${this.sessionId}/save`) as Promise<SaveSummary>,
    );
    if (summary === null) return;
    this.saveSummary = summary;
    this.closed = true;
  }

  /** Run one request with in-flight tracking; on failure set the error
   * banner and return null without touching persisted state. */
  private async guarded<T>(call: () => Promise<T>): Promise<T | null> {
    this.connectionStatus = "in_flight";
    this.errorBanner = null;
    try {
      const result = await call();
      this.connectionStatus = "idle";
      return result;
    } catch (err) {
      this.connectionStatus = "error";
      this.errorBanner = err instanceof Error ? err.message : String(err);
      return null;
    }
  }
}
