/**
 * Session state machine, kept free of DOM concerns so it is testable
 * without a browser. One session = one annotator working the queue.
 */

import type { ApiClient, Progress, TaskView, Verdict } from "./api";

export interface FormState {
  verdict: Verdict | null;
  reasoning: string;
}

export type SessionState =
  | { kind: "loading" }
  | { kind: "task"; task: TaskView; notice: string | null; inlineError: string | null }
  | { kind: "done"; progress: Progress }
  | { kind: "error"; message: string };

/** Submission is allowed only with a verdict and non-whitespace reasoning. */
export function formValid(form: FormState): boolean {
  return form.verdict !== null && form.reasoning.trim().length > 0;
}

export function emptyForm(): FormState {
  return { verdict: null, reasoning: "" };
}

export class ReviewSession {
  state: SessionState = { kind: "loading" };
  /** survives network failures so a typed rationale is never lost */
  form: FormState = emptyForm();

  constructor(
    private readonly api: ApiClient,
    readonly annotatorId: string,
    private readonly onChange: (session: ReviewSession) => void = () => {},
  ) {}

  private setState(state: SessionState): void {
    this.state = state;
    this.onChange(this);
  }

  async loadNext(notice: string | null = null): Promise<void> {
    try {
      const response = await this.api.nextTask(this.annotatorId);
      if (response.task === null) {
        this.setState({ kind: "done", progress: response.progress });
      } else {
        this.setState({ kind: "task", task: response.task, notice, inlineError: null });
      }
    } catch (error) {
      // keep this.form untouched: the retry affordance must not lose input
      this.setState({ kind: "error", message: String(error) });
    }
  }

  setVerdict(verdict: Verdict): void {
    this.form.verdict = verdict;
    this.onChange(this);
  }

  setReasoning(reasoning: string): void {
    this.form.reasoning = reasoning;
    this.onChange(this);
  }

  async submit(): Promise<void> {
    if (this.state.kind !== "task" || !formValid(this.form)) {
      return;
    }
    const task = this.state.task;
    const result = await this.api
      .submitAnnotation({
        taskId: task.taskId,
        annotatorId: this.annotatorId,
        verdict: this.form.verdict as Verdict,
        reasoning: this.form.reasoning,
      })
      .catch((error) => ({ kind: "invalid" as const, message: String(error) }));
    if (result.kind === "stored") {
      this.form = emptyForm();
      await this.loadNext();
    } else if (result.kind === "duplicate") {
      this.form = emptyForm();
      await this.loadNext("Already annotated; moved to the next statement.");
    } else {
      this.setState({ ...this.state, inlineError: result.message });
    }
  }
}
