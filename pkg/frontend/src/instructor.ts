// Instructor console: pick a lesson with recorded activity, ask questions in
// natural language, follow up in the same conversation. Students appear only
// as pseudonymous tokens; the view renders whatever the gateway returns and
// nothing else.

import { Gateway } from "./api.js";
import { escapeHtml } from "./escape.js";
import type { LessonSummary } from "./types.js";

export interface ConversationTurn {
  question: string;
  answer: string;
}

export class InstructorView {
  lessons: LessonSummary[] = [];
  selected: string | null = null;
  conversationId: string | null = null;
  turns: ConversationTurn[] = [];
  busy = false;

  constructor(private api: Gateway) {}

  async loadLessons(): Promise<void> {
    this.lessons = await this.api.listLessons();
  }

  select(lessonId: string): void {
    if (this.selected !== lessonId) {
      this.selected = lessonId;
      this.conversationId = null; // a new lesson starts a new conversation
      this.turns = [];
    }
  }

  async ask(question: string): Promise<string> {
    if (!this.selected) throw new Error("select a lesson first");
    if (!question.trim()) throw new Error("question must be non-empty");
    this.busy = true;
    try {
      const result = await this.api.ask(
        this.selected,
        question,
        this.conversationId ?? undefined,
      );
      this.conversationId = result.conversation_id;
      this.turns.push({ question, answer: result.answer });
      return result.answer;
    } finally {
      this.busy = false;
    }
  }

  renderHtml(): string {
    const lessonRows = this.lessons
      .map(
        (lesson) => `
<tr class="${lesson.lesson_id === this.selected ? "selected" : ""}">
  <td>${escapeHtml(lesson.lesson_id)}</td>
  <td>${lesson.total_students}</td>
  <td>${lesson.total_sessions}</td>
  <td>${lesson.total_events}</td>
</tr>`,
      )
      .join("\n");
    const conversation = this.turns
      .map(
        (turn) => `
<div class="turn">
  <p class="question">${escapeHtml(turn.question)}</p>
  <p class="answer">${escapeHtml(turn.answer)}</p>
</div>`,
      )
      .join("\n");
    return `
<section class="instructor">
  <table class="lessons">
    <thead><tr><th>lesson</th><th>students</th><th>sessions</th><th>events</th></tr></thead>
    <tbody>${lessonRows}</tbody>
  </table>
  <div class="conversation">${conversation}</div>
</section>`;
  }
}
