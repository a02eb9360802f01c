// Annotation session state machine: fetch a task, collect one answer per
// question, advance when the task is complete.  The server re-serves an
// unfinished task, so refreshing mid-task is safe.

import { AnnotationApi } from "./api.js";
import type { AnnotationTask, SubmitResult } from "./types.js";

export type SessionState = "idle" | "task" | "done";

export class AnnotationSession {
  state: SessionState = "idle";
  current: AnnotationTask | null = null;
  submitted = 0;
  private answered = new Set<string>();

  constructor(
    private readonly api: AnnotationApi,
    readonly annotator: string,
  ) {}

  async loadNext(): Promise<SessionState> {
    const resp = await this.api.nextTask(this.annotator);
    if (resp.done) {
      this.state = "done";
      this.current = null;
    } else {
      this.state = "task";
      this.current = resp.task;
      this.answered = new Set();
    }
    return this.state;
  }

  openQuestions(): string[] {
    if (!this.current) return [];
    return this.current.questions
      .map((q) => q.name)
      .filter((name) => !this.answered.has(name));
  }

  taskComplete(): boolean {
    return this.current !== null && this.openQuestions().length === 0;
  }

  async answer(question: string, value: string): Promise<SubmitResult> {
    if (!this.current) {
      throw new Error("no active task");
    }
    const spec = this.current.questions.find((q) => q.name === question);
    if (!spec) {
      throw new Error(`task has no question ${question}`);
    }
    if (!spec.options.includes(value)) {
      return { status: "invalid", error: `answer ${value} not in ${spec.options.join("/")}` };
    }
    const result = await this.api.submitAnswer({
      task_id: this.current.task_id,
      question,
      answer: value,
      annotator: this.annotator,
    });
    if (result.status === "recorded" || result.status === "conflict") {
      // conflict means the answer already exists server-side; either way
      // the question is closed for this session
      this.answered.add(question);
      if (result.status === "recorded") this.submitted += 1;
    }
    return result;
  }
}
