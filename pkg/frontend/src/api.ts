// The console's single request layer. Every call the UI makes to the stack
// goes through this file, and only the documented gateway surface appears
// here. Event posts are fire-and-forget: they never throw and never block
// the UI path.

import type {
  AskResult,
  ExecutionResult,
  GatewayEndpoints,
  GradeResult,
  LessonSummary,
  RunResult,
  SessionState,
  WireEvent,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

// The surface the views program against; GatewayClient is the production
// implementation and tests substitute stubs.
export interface Gateway {
  createSession(userId: string, lessonId: string): Promise<SessionState>;
  getSession(sessionKey: string): Promise<SessionState>;
  editCell(sessionKey: string, cellId: string, source: string): Promise<{ ok: boolean }>;
  runChat(sessionKey: string, message: string): Promise<RunResult>;
  execute(sessionKey: string, cellId: string, code: string): Promise<ExecutionResult>;
  grade(sessionKey: string, checkpointId: string): Promise<GradeResult>;
  listLessons(): Promise<LessonSummary[]>;
  ask(lessonId: string, question: string, conversationId?: string): Promise<AskResult>;
  postEvent(event: WireEvent): Promise<boolean>;
}

export function isoNow(): string {
  return new Date().toISOString().replace(/(\.\d{3})\d*Z?$/, "$1Z");
}

export class GatewayClient implements Gateway {
  constructor(private endpoints: GatewayEndpoints) {}

  private headers(): Record<string, string> {
    return {
      "Content-Type": "application/json",
      Authorization: `Bearer ${this.endpoints.token}`,
    };
  }

  private async request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(`${base}${path}`, { headers: this.headers(), ...init });
    if (!resp.ok) {
      throw new ApiError(resp.status, await resp.text());
    }
    return (await resp.json()) as T;
  }

  private post<T>(base: string, path: string, body: unknown): Promise<T> {
    return this.request<T>(base, path, {
      method: "POST",
      headers: this.headers(),
      body: JSON.stringify(body),
    });
  }

  // -- sessions and teaching

  createSession(userId: string, lessonId: string): Promise<SessionState> {
    return this.post(this.endpoints.teaching, "/sessions", {
      user_id: userId,
      lesson_id: lessonId,
    });
  }

  getSession(sessionKey: string): Promise<SessionState> {
    return this.request(this.endpoints.teaching, `/sessions/${sessionKey}`);
  }

  editCell(sessionKey: string, cellId: string, source: string): Promise<{ ok: boolean }> {
    return this.request(this.endpoints.teaching, `/sessions/${sessionKey}/cells/${cellId}`, {
      method: "PUT",
      headers: this.headers(),
      body: JSON.stringify({ source }),
    });
  }

  runChat(sessionKey: string, message: string): Promise<RunResult> {
    return this.post(this.endpoints.teaching, "/run", {
      session_id: sessionKey,
      message,
    });
  }

  execute(sessionKey: string, cellId: string, code: string): Promise<ExecutionResult> {
    return this.post(this.endpoints.teaching, "/execute", {
      session_id: sessionKey,
      cell_id: cellId,
      code,
    });
  }

  grade(sessionKey: string, checkpointId: string): Promise<GradeResult> {
    return this.post(this.endpoints.autograde, "/grade", {
      session_id: sessionKey,
      checkpoint_id: checkpointId,
    });
  }

  // -- instructor surface

  listLessons(): Promise<LessonSummary[]> {
    return this.request(this.endpoints.feedback, "/feedback/lessons");
  }

  ask(lessonId: string, question: string, conversationId?: string): Promise<AskResult> {
    return this.post(this.endpoints.feedback, "/feedback/ask", {
      lesson_id: lessonId,
      question,
      ...(conversationId ? { conversation_id: conversationId } : {}),
    });
  }

  // -- analytics events (fire-and-forget by contract)

  async postEvent(event: WireEvent): Promise<boolean> {
    try {
      const resp = await fetch(`${this.endpoints.events}/events`, {
        method: "POST",
        headers: this.headers(),
        body: JSON.stringify(event),
      });
      return resp.ok;
    } catch {
      return false; // analytics failures never reach the student path
    }
  }
}
