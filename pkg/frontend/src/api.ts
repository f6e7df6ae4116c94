/**
 * Typed client for the review service.
 *
 * The wire contract is the service's documented JSON API; nothing here
 * reads or exposes the ground-truth source of a statement, which the
 * server withholds from every annotator-facing endpoint.
 */

export type Verdict = "Human" | "AI";

export interface Progress {
  completed: number;
  total: number;
}

export interface TaskView {
  taskId: string;
  statement: string;
  progress: Progress;
}

/** Next-task response: task is null once the queue is exhausted. */
export interface TaskResponse {
  task: TaskView | null;
  progress: Progress;
}

export interface PairAgreement {
  annotatorA: string;
  annotatorB: string;
  sharedTasks: number;
  agreement: number;
  kappa: number;
}

export interface AgreementView {
  status: "ok" | "insufficient_overlap";
  nAnnotations: number;
  meanAgreement?: number;
  meanKappa?: number;
  pairs: PairAgreement[];
}

export type SubmitResult =
  | { kind: "stored" }
  | { kind: "duplicate" }
  | { kind: "invalid"; message: string };

export interface AnnotationDraft {
  taskId: string;
  annotatorId: string;
  verdict: Verdict;
  reasoning: string;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async nextTask(annotatorId: string): Promise<TaskResponse> {
    const response = await this.fetchFn(
      `${this.baseUrl}/tasks?annotator_id=${encodeURIComponent(annotatorId)}`,
    );
    if (!response.ok) {
      throw new Error(`task fetch failed with ${response.status}`);
    }
    const body = await response.json();
    const progress: Progress = {
      completed: body.progress.completed,
      total: body.progress.total,
    };
    if (body.task_id === null || body.task_id === undefined) {
      return { task: null, progress };
    }
    return {
      task: { taskId: body.task_id, statement: body.statement, progress },
      progress,
    };
  }

  async submitAnnotation(draft: AnnotationDraft): Promise<SubmitResult> {
    const response = await this.fetchFn(`${this.baseUrl}/annotations`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        task_id: draft.taskId,
        annotator_id: draft.annotatorId,
        verdict: draft.verdict,
        reasoning: draft.reasoning,
      }),
    });
    if (response.status === 201) {
      return { kind: "stored" };
    }
    if (response.status === 409) {
      return { kind: "duplicate" };
    }
    const body = await response.json().catch(() => ({ error: `HTTP ${response.status}` }));
    return { kind: "invalid", message: body.error ?? `HTTP ${response.status}` };
  }

  async agreement(): Promise<AgreementView> {
    const response = await this.fetchFn(`${this.baseUrl}/agreement`);
    if (!response.ok) {
      throw new Error(`agreement fetch failed with ${response.status}`);
    }
    const body = await response.json();
    if (body.status === "insufficient_overlap") {
      return {
        status: "insufficient_overlap",
        nAnnotations: body.n_annotations ?? 0,
        pairs: [],
      };
    }
    return {
      status: "ok",
      nAnnotations: body.n_annotations,
      meanAgreement: body.mean_agreement,
      meanKappa: body.mean_kappa,
      pairs: (body.pairs ?? []).map(
        (pair: Record<string, unknown>): PairAgreement => ({
          annotatorA: pair.annotator_a as string,
          annotatorB: pair.annotator_b as string,
          sharedTasks: pair.shared_tasks as number,
          agreement: pair.agreement as number,
          kappa: pair.kappa as number,
        }),
      ),
    };
  }
}
