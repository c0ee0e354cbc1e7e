/** In-memory stand-in for the chat/filtering service, mirroring its
 * endpoint contracts, plus request recording for contract assertions. */

import { HttpError, type Transport } from "../src/transport.js";
import type { FilterTaskPayload, TurnPayload } from "../src/types.js";

export interface RecordedRequest {
  method: string;
  path: string;
  body?: unknown;
}

export class StubService implements Transport {
  requests: RecordedRequest[] = [];
  /** Every system utterance this stub has ever produced. */
  servedSystemTexts: string[] = [];
  failNext: { status: number; message: string } | null = null;

  private replyCounter = 0;
  private sessions = new Map<
    string,
    { turns: TurnPayload[]; fixes: number; closed: boolean }
  >();
  private pendingTasks: FilterTaskPayload[] = [];
  private doneTasks = new Set<string>();

  seedTasks(tasks: FilterTaskPayload[]): void {
    this.pendingTasks = [...tasks];
  }

  private nextSystemText(): string {
    const text = `service reply ${this.replyCounter++}`;
    this.servedSystemTexts.push(text);
    return text;
  }

  async request(method: "GET" | "POST", path: string, body?: unknown): Promise<unknown> {
    this.requests.push({ method, path, body });
    if (this.failNext !== null) {
      const { status, message } = this.failNext;
      this.failNext = null;
      throw new HttpError(status, message);
    }

    if (method === "GET" && path === "/metadata") {
      return { error_types: ["not_sensible", "wrong_persona", "not_safe", "etc"] };
    }

    if (method === "POST" && path === "/session") {
      const id = `s-${this.sessions.size}`;
      const greeting: TurnPayload = { speaker: "system", text: this.nextSystemText(), index: 0 };
      this.sessions.set(id, { turns: [greeting], fixes: 0, closed: false });
      return { session_id: id, greeting, route: "retrieval" };
    }

    let match = path.match(/^\/session\/([^/]+)\/message$/);
    if (method === "POST" && match) {
      const session = this.getSession(match[1]);
      const { text } = body as { text: string };
      session.turns.push({ speaker: "user", text, index: session.turns.length });
      const turn: TurnPayload = {
        speaker: "system",
        text: this.nextSystemText(),
        index: session.turns.length,
      };
      session.turns.push(turn);
      return { turn, route: "retrieval" };
    }

    match = path.match(/^\/session\/([^/]+)\/fix$/);
    if (method === "POST" && match) {
      const session = this.getSession(match[1]);
      const last = session.turns[session.turns.length - 1];
      if (last.speaker !== "system") throw new HttpError(409, "nothing to fix");
      const turn: TurnPayload = { speaker: "system", text: this.nextSystemText(), index: last.index };
      session.turns[session.turns.length - 1] = turn;
      session.fixes += 1;
      return { turn, route: "generation", attempt_number: session.fixes };
    }

    match = path.match(/^\/session\/([^/]+)\/save$/);
    if (method === "POST" && match) {
      const session = this.getSession(match[1]);
      if (session.closed) throw new HttpError(409, "session closed");
      session.closed = true;
      const positives = session.turns.filter((t) => t.speaker === "system").length;
      return { positives, negatives: session.fixes };
    }

    if (method === "GET" && path.startsWith("/filter/tasks/next")) {
      const task = this.pendingTasks[0] ?? null;
      return { task, remaining: this.pendingTasks.length };
    }

    match = path.match(/^\/filter\/tasks\/([^/]+)\/annotation$/);
    if (method === "POST" && match) {
      const id = match[1];
      if (this.doneTasks.has(id)) throw new HttpError(409, "already annotated");
      const at = this.pendingTasks.findIndex((t) => t.task_id === id);
      if (at < 0) throw new HttpError(404, "no such task");
      this.pendingTasks.splice(at, 1);
      this.doneTasks.add(id);
      return { task_id: id, status: "done" };
    }

    throw new HttpError(404, `unhandled ${method} ${path}`);
  }

  private getSession(id: string) {
    const session = this.sessions.get(id);
    if (!session) throw new HttpError(404, "no such session");
    if (session.closed) throw new HttpError(409, "session closed");
    return session;
  }
}

export function makeTask(id: string, nTurns = 5): FilterTaskPayload {
  const turns: TurnPayload[] = [];
  for (let i = 0; i < nTurns; i++) {
    turns.push({
      speaker: i % 2 === 0 ? "system" : "user",
      text: `turn ${i}`,
      index: i,
    });
  }
  return { task_id: id, dialogue: { id, turns } };
}
