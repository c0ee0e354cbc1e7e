/** Wire types for the chat / filtering service. */

export type Speaker = "system" | "user";

export interface TurnPayload {
  speaker: Speaker;
  text: string;
  index: number;
}

export interface SessionStart {
  session_id: string;
  greeting: TurnPayload;
  route: string;
}

export interface MessageReply {
  turn: TurnPayload;
  route: string;
}

export interface FixReply {
  turn: TurnPayload;
  route: string;
  attempt_number: number;
}

export interface SaveSummary {
  positives: number;
  negatives: number;
}

export interface Metadata {
  error_types: string[];
}

export interface FilterTaskPayload {
  task_id: string;
  dialogue: {
    id: string;
    turns: TurnPayload[];
  };
}

export interface NextTaskReply {
  task: FilterTaskPayload | null;
  remaining: number;
}

export interface AnnotationPayload {
  first_violation_index: number | null;
  error_type: string | null;
  elapsed_seconds: number;
}

export interface AnnotationReply {
  task_id: string;
  status: string;
}
