// Student lesson view: chat with the tutor, edit and run cells, submit
// checkpoints, and report video position from the slider. All state changes
// go through the gateway client; activity events are posted fire-and-forget.

import { Gateway, isoNow } from "./api.js";
import { escapeHtml } from "./escape.js";
import type { EventCategory, ExecutionResult, SessionState } from "./types.js";

export interface ChatLine {
  role: "student" | "ai";
  text: string;
}

export interface CellView {
  cellId: string;
  source: string;
  output: string;
  error: string | null;
}

export class StudentView {
  session: SessionState | null = null;
  chat: ChatLine[] = [];
  cells = new Map<string, CellView>();
  checkpoints = new Map<string, boolean>();
  videoPosition = 0;
  busy = false;
  notice = "";

  constructor(private api: Gateway, private userId: string, private lessonId: string) {}

  private get key(): string {
    if (!this.session) throw new Error("no active session");
    return this.session.session_key;
  }

  private emit(category: EventCategory, payload: Record<string, unknown>): void {
    if (!this.session) return;
    // deliberately not awaited: the UI never blocks on analytics
    void this.api.postEvent({
      user_id: this.userId,
      lesson_id: this.lessonId,
      session_id: this.session.session_key,
      category,
      timestamp: isoNow(),
      payload,
    });
  }

  async start(): Promise<void> {
    this.session = await this.api.createSession(this.userId, this.lessonId);
    this.chat = this.session.chat_context.map((t) => ({
      role: t.role as "student" | "ai",
      text: t.text,
    }));
    this.cells = new Map(
      Object.entries(this.session.cell_contents).map(([cellId, source]) => [
        cellId,
        {
          cellId,
          source,
          output: this.session?.cell_results[cellId]?.output ?? "",
          error: this.session?.cell_results[cellId]?.error ?? null,
        },
      ]),
    );
    this.checkpoints = new Map(
      this.session.completed_checkpoints.map((checkpointId) => [checkpointId, true]),
    );
    this.emit("session_management", { action: "start" });
  }

  end(): void {
    this.emit("session_management", { action: "end" });
  }

  async sendChat(message: string): Promise<void> {
    if (!message.trim() || this.busy) return;
    this.busy = true;
    this.chat.push({ role: "student", text: message });
    try {
      const result = await this.api.runChat(this.key, message);
      this.chat.push({ role: "ai", text: result.response });
    } catch (err) {
      this.notice = "The tutor did not answer; try again in a moment.";
      this.chat.pop();
    } finally {
      this.busy = false;
    }
  }

  async saveCell(cellId: string, source: string): Promise<void> {
    const cell = this.cells.get(cellId);
    if (!cell) return;
    cell.source = source; // optimistic; the gateway edit emits the editor event
    await this.api.editCell(this.key, cellId, source);
  }

  async runCell(cellId: string): Promise<ExecutionResult | null> {
    const cell = this.cells.get(cellId);
    if (!cell) return null;
    let result: ExecutionResult;
    try {
      result = await this.api.execute(this.key, cellId, cell.source);
    } catch (err) {
      this.notice = "The execution service is unavailable.";
      return null;
    }
    cell.output = result.result_repr || result.stdout;
    cell.error = result.error ? result.error.message : null;
    this.emit("code_execution", {
      cell_id: cellId,
      success: result.error === null,
      ...(result.error ? { error_type: result.error.type, error_message: result.error.message } : {}),
      duration_ms: result.duration_ms,
    });
    if (result.error) {
      this.emit("error", {
        message: result.error.message,
        error_type: result.error.type,
        cell_id: cellId,
      });
    }
    return result;
  }

  async submitCheckpoint(checkpointId: string): Promise<boolean> {
    const result = await this.api.grade(this.key, checkpointId);
    if (result.passed) {
      this.checkpoints.set(checkpointId, true);
    }
    this.notice = result.reasoning;
    return result.passed;
  }

  // the position slider stands in for a real video player; it emits the
  // same event shapes a player would
  play(): void {
    this.emit("video_playback", { action: "play", position_s: this.videoPosition });
  }

  pause(): void {
    this.emit("video_playback", { action: "pause", position_s: this.videoPosition });
  }

  seek(toPosition: number): void {
    const from = this.videoPosition;
    this.videoPosition = toPosition;
    this.emit("video_playback", {
      action: "seek",
      position_s: toPosition,
      seek_from_s: from,
      seek_to_s: toPosition,
    });
  }

  renderHtml(): string {
    const chat = this.chat
      .map((line) => `<p class="chat ${line.role}">${escapeHtml(line.text)}</p>`)
      .join("\n");
    const cells = [...this.cells.values()]
      .map(
        (cell) => `
<div class="cell" data-cell="${escapeHtml(cell.cellId)}">
  <textarea>${escapeHtml(cell.source)}</textarea>
  <pre class="output">${escapeHtml(cell.output)}</pre>
  ${cell.error ? `<pre class="error">${escapeHtml(cell.error)}</pre>` : ""}
</div>`,
      )
      .join("\n");
    const badges = [...this.checkpoints.entries()]
      .map(
        ([checkpointId, done]) =>
          `<span class="badge ${done ? "done" : "open"}">${escapeHtml(checkpointId)}</span>`,
      )
      .join(" ");
    return `
<section class="student">
  <div class="chat-pane">${chat}</div>
  <div class="cells-pane">${cells}</div>
  <div class="checkpoints">${badges}</div>
  ${this.notice ? `<p class="notice">${escapeHtml(this.notice)}</p>` : ""}
</section>`;
  }
}
