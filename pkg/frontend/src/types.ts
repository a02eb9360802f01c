// Wire types for the annotation service; field names match the server's
// JSON exactly, and the log-record schema is byte-identical to the
// pipeline's annotation log lines.

export type BinaryAnswer = "yes" | "somewhat" | "no";

export interface QuestionSpec {
  name: string;
  options: string[];
}

export interface TaskPayload {
  coords?: number[];
  ref?: string;
  class_R?: string;
  group?: string;
  s_plus?: string;
}

export interface AnnotationTask {
  task_id: string;
  sample_id: string;
  attribute: string;
  form: "binary" | "group";
  questions: QuestionSpec[];
  payload: TaskPayload;
}

export interface NextTaskDone {
  done: true;
}

export interface NextTaskReady {
  done: false;
  task: AnnotationTask;
}

export type NextTaskResponse = NextTaskDone | NextTaskReady;

export interface AnswerSubmission {
  task_id: string;
  question: string;
  answer: string;
  annotator: string;
}

export type SubmitStatus =
  | "recorded"
  | "conflict"
  | "invalid"
  | "unknown-task"
  | "unauthorized"
  | "error";

export interface SubmitResult {
  status: SubmitStatus;
  error?: string;
}

export interface AttributeProgress {
  quota: number;
  selected: number;
  completed: number;
  answers: number;
  yes_rate: number | null;
  complete: boolean;
}

export interface ProgressResponse {
  attributes: Record<string, AttributeProgress>;
  total_tasks: number;
  completed_tasks: number;
  records: number;
}

export function isTask(doc: unknown): doc is AnnotationTask {
  if (typeof doc !== "object" || doc === null) return false;
  const t = doc as Record<string, unknown>;
  return (
    typeof t.task_id === "string" &&
    typeof t.sample_id === "string" &&
    Array.isArray(t.questions) &&
    t.questions.every(
      (q) =>
        typeof q === "object" &&
        q !== null &&
        typeof (q as QuestionSpec).name === "string" &&
        Array.isArray((q as QuestionSpec).options),
    )
  );
}
