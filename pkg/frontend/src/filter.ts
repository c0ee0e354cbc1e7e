/** Filtering view state machine: step through generated dialogues and record
 * the first turn (if any) that falls outside the role specification. */

import type {
  AnnotationPayload,
  AnnotationReply,
  FilterTaskPayload,
  Metadata,
  NextTaskReply,
} from "./types.js";
import type { Transport } from "./transport.js";

export type Clock = () => number; // milliseconds

export class FilterView {
  task: FilterTaskPayload | null = null;
  remaining = 0;
  errorTypes: string[] = [];
  selectedTurnIndex: number | null = null;
  selectedErrorType: string | null = null;
  noViolation = false;
  inFlight = false;
  errorBanner: string | null = null;
  exhausted = false;
  private taskStartedAt = 0;

  constructor(
    private readonly transport: Transport,
    private readonly clock: Clock = () => Date.now(),
  ) {}

  async loadMetadata(): Promise<void> {
    const meta = (await this.transport.request("GET", "/metadata")) as Metadata;
    this.errorTypes = meta.error_types;
  }

  async loadNext(annotator?: string): Promise<void> {
    const query = annotator ? `?annotator=${encodeURIComponent(annotator)}` : "";
    const reply = (await this.transport.request(
      "GET",
      `/filter/tasks/next${query}`,
    )) as NextTaskReply;
    this.task = reply.task;
    this.remaining = reply.remaining;
    this.exhausted = reply.task === null;
    this.selectedTurnIndex = null;
    this.selectedErrorType = null;
    this.noViolation = false;
    this.taskStartedAt = this.clock();
  }

  /** Only system turns of the current dialogue are selectable. */
  canSelectTurn(index: number): boolean {
    if (this.task === null) return false;
    const turn = this.task.dialogue.turns.find((t) => t.index === index);
    return turn !== undefined && turn.speaker === "system";
  }

  selectTurn(index: number): void {
    if (!this.canSelectTurn(index)) return;
    this.selectedTurnIndex = index;
    this.noViolation = false;
  }

  selectErrorType(errorType: string): void {
    if (!this.errorTypes.includes(errorType)) {
      throw new Error(`unknown error type: ${errorType}`);
    }
    this.selectedErrorType = errorType;
  }

  markNoViolation(): void {
    this.noViolation = true;
    this.selectedTurnIndex = null;
    this.selectedErrorType = null;
  }

  /** Submission requires a selected system turn + error type, or an explicit
   * no-violation choice. */
  get submitEnabled(): boolean {
    if (this.task === null || this.inFlight) return false;
    if (this.noViolation) return true;
    return this.selectedTurnIndex !== null && this.selectedErrorType !== null;
  }

  async submit(): Promise<void> {
    if (!this.submitEnabled || this.task === null) return;
    const payload: AnnotationPayload = this.noViolation
      ? { first_violation_index: null, error_type: null, elapsed_seconds: this.elapsedSeconds() }
      : {
          first_violation_index: this.selectedTurnIndex,
          error_type: this.selectedErrorType,
          elapsed_seconds: this.elapsedSeconds(),
        };
    this.inFlight = true;
    this.errorBanner = null;
    try {
      (await this.transport.request(
        "POST",
        `/filter/tasks/${this.task.task_id}/annotation`,
        payload,
      )) as AnnotationReply;
    } catch (err) {
      this.errorBanner = err instanceof Error ? err.message : String(err);
      return;
    } finally {
      this.inFlight = false;
    }
    await this.loadNext(); // also resets the timer
  }

  private elapsedSeconds(): number {
    return (this.clock() - this.taskStartedAt) / 1000;
  }
}
