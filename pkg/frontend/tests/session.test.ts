import { describe, expect, it } from "vitest";

import type { AnnotationDraft, ApiClient, SubmitResult, TaskResponse } from "../src/api";
import { ReviewSession, emptyForm, formValid } from "../src/session";

/** In-memory stand-in for the review service, following its contract. */
class FakeApi {
  stored: AnnotationDraft[] = [];
  failNextFetch = false;

  constructor(private statements: string[]) {}

  private annotated(annotatorId: string): Set<string> {
    return new Set(
      this.stored.filter((a) => a.annotatorId === annotatorId).map((a) => a.taskId),
    );
  }

  async nextTask(annotatorId: string): Promise<TaskResponse> {
    if (this.failNextFetch) {
      this.failNextFetch = false;
      throw new Error("network unreachable");
    }
    const done = this.annotated(annotatorId);
    const progress = { completed: done.size, total: this.statements.length };
    for (let i = 0; i < this.statements.length; i += 1) {
      const taskId = `task-${String(i + 1).padStart(4, "0")}`;
      if (!done.has(taskId)) {
        return {
          task: { taskId, statement: this.statements[i]!, progress },
          progress,
        };
      }
    }
    return { task: null, progress };
  }

  async submitAnnotation(draft: AnnotationDraft): Promise<SubmitResult> {
    if (this.annotated(draft.annotatorId).has(draft.taskId)) {
      return { kind: "duplicate" };
    }
    if (!draft.reasoning.trim() || draft.reasoning.includes("forbidden")) {
      return { kind: "invalid", message: "reasoning rejected by the service" };
    }
    this.stored.push(draft);
    return { kind: "stored" };
  }

  async agreement(): Promise<never> {
    throw new Error("not used in session tests");
  }
}

function makeSession(statements: string[] = ["s1", "s2", "s3"]): {
  api: FakeApi;
  session: ReviewSession;
} {
  const api = new FakeApi(statements);
  const session = new ReviewSession(api as unknown as ApiClient, "alice");
  return { api, session };
}

describe("formValid", () => {
  it("blocks submission without a verdict", () => {
    expect(formValid({ verdict: null, reasoning: "thought about it" })).toBe(false);
  });

  it("blocks submission with whitespace-only reasoning", () => {
    expect(formValid({ verdict: "Human", reasoning: "   " })).toBe(false);
  });

  it("allows a verdict plus one non-whitespace character", () => {
    expect(formValid({ verdict: "AI", reasoning: "x" })).toBe(true);
  });
});

describe("ReviewSession", () => {
  it("loads the first task with progress", async () => {
    const { session } = makeSession();
    await session.loadNext();
    expect(session.state).toMatchObject({
      kind: "task",
      task: { taskId: "task-0001", progress: { completed: 0, total: 3 } },
    });
  });

  it("advances to the next task after a stored verdict", async () => {
    const { api, session } = makeSession();
    await session.loadNext();
    session.setVerdict("Human");
    session.setReasoning("sounds personal");
    await session.submit();
    expect(api.stored).toHaveLength(1);
    expect(session.state).toMatchObject({ kind: "task", task: { taskId: "task-0002" } });
    expect(session.form).toEqual(emptyForm());
  });

  it("shows the completion screen when the queue is exhausted", async () => {
    const { session } = makeSession(["only one"]);
    await session.loadNext();
    session.setVerdict("AI");
    session.setReasoning("too polished");
    await session.submit();
    expect(session.state).toMatchObject({ kind: "done", progress: { completed: 1, total: 1 } });
  });

  it("ignores submit when the form is invalid", async () => {
    const { api, session } = makeSession();
    await session.loadNext();
    session.setReasoning("no verdict chosen");
    await session.submit();
    expect(api.stored).toHaveLength(0);
    expect(session.state.kind).toBe("task");
  });

  it("advances with a notice on a duplicate conflict", async () => {
    const { api, session } = makeSession();
    api.stored.push({
      taskId: "task-0001",
      annotatorId: "alice",
      verdict: "AI",
      reasoning: "earlier session",
    });
    // the session does not know yet and still renders task-0002 first;
    // force a stale submit against task-0001 to simulate the race
    await session.loadNext();
    expect(session.state).toMatchObject({ kind: "task", task: { taskId: "task-0002" } });
    if (session.state.kind === "task") {
      session.state.task = { ...session.state.task, taskId: "task-0001" };
    }
    session.setVerdict("Human");
    session.setReasoning("it reads naturally");
    await session.submit();
    expect(session.state).toMatchObject({
      kind: "task",
      task: { taskId: "task-0002" },
      notice: "Already annotated; moved to the next statement.",
    });
  });

  it("surfaces a server-side 400 inline and keeps the form", async () => {
    const { api, session } = makeSession();
    await session.loadNext();
    session.setVerdict("Human");
    session.setReasoning("locally valid but forbidden upstream");
    await session.submit();
    expect(api.stored).toHaveLength(0);
    expect(session.state).toMatchObject({
      kind: "task",
      task: { taskId: "task-0001" },
      inlineError: "reasoning rejected by the service",
    });
    expect(session.form.reasoning).toBe("locally valid but forbidden upstream");
  });

  it("keeps the typed form across a network failure and retries", async () => {
    const { api, session } = makeSession();
    await session.loadNext();
    session.setVerdict("AI");
    session.setReasoning("half-typed rationale");
    api.failNextFetch = true;
    await session.loadNext();
    expect(session.state).toMatchObject({ kind: "error" });
    expect(session.form).toEqual({ verdict: "AI", reasoning: "half-typed rationale" });
    await session.loadNext(); // the retry affordance calls this again
    expect(session.state.kind).toBe("task");
    expect(session.form.reasoning).toBe("half-typed rationale");
  });

  it("a completed session stores exactly one annotation per task", async () => {
    const statements = ["a", "b", "c", "d", "e"];
    const { api, session } = makeSession(statements);
    await session.loadNext();
    while (session.state.kind === "task") {
      session.setVerdict(session.state.task.taskId.endsWith("2") ? "AI" : "Human");
      session.setReasoning(`reason for ${session.state.task.taskId}`);
      await session.submit();
    }
    expect(session.state.kind).toBe("done");
    expect(api.stored).toHaveLength(statements.length);
    const taskIds = api.stored.map((a) => a.taskId);
    expect(new Set(taskIds).size).toBe(statements.length);
  });
});
