// Wire types for the gateway JSON surface.

export interface GatewayEndpoints {
  teaching: string;
  autograde: string;
  events: string;
  feedback: string;
  token: string;
}

export interface SessionState {
  session_key: string;
  user_id: string;
  lesson_id: string;
  cell_contents: Record<string, string>;
  cell_results: Record<string, { output: string; error: string | null }>;
  completed_checkpoints: string[];
  chat_context: { role: string; text: string }[];
}

export interface TurnTiming {
  l_video: number;
  l_guidance: number;
  l_code: number;
  l_synth: number;
  wall: number;
}

export interface RunResult {
  response: string;
  timing: TurnTiming;
  format_findings: string[];
  degraded: boolean;
}

export interface GradeResult {
  passed: boolean;
  reasoning: string;
}

export interface ExecutionResult {
  stdout: string;
  stderr: string;
  result_repr: string;
  error: { type: string; message: string } | null;
  duration_ms: number;
}

export interface LessonSummary {
  lesson_id: string;
  total_students: number;
  total_sessions: number;
  counts: Record<string, number>;
  total_events: number;
}

export interface AskResult {
  conversation_id: string;
  answer: string;
}

export type EventCategory =
  | "video_playback"
  | "chat_message"
  | "code_execution"
  | "code_editor"
  | "checkpoint_evaluation"
  | "session_management"
  | "error";

export interface WireEvent {
  user_id: string;
  lesson_id: string;
  session_id: string;
  category: EventCategory;
  timestamp: string; // ISO-8601 with milliseconds
  payload: Record<string, unknown>;
}
