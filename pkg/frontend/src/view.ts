/**
 * DOM rendering. Everything shown to the annotator comes from the
 * blinded task payloads; there is deliberately no code path that could
 * name a statement's origin.
 */

import type { AgreementView } from "./api";
import { formValid, type ReviewSession } from "./session";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text) {
    node.textContent = text;
  }
  return node;
}

export function renderSession(container: HTMLElement, session: ReviewSession): void {
  container.replaceChildren();
  const state = session.state;

  if (state.kind === "loading") {
    container.append(el("p", { class: "status" }, "Loading the next statement..."));
    return;
  }

  if (state.kind === "error") {
    const banner = el("div", { class: "banner error", role: "alert" });
    banner.append(el("p", {}, `Could not reach the review service: ${state.message}`));
    const retry = el("button", { id: "retry", type: "button" }, "Retry");
    retry.addEventListener("click", () => void session.loadNext());
    banner.append(retry);
    container.append(banner);
    return;
  }

  if (state.kind === "done") {
    const done = el("div", { class: "completion" });
    done.append(el("h2", {}, "All statements reviewed"));
    done.append(
      el(
        "p",
        {},
        `You annotated ${state.progress.completed} of ${state.progress.total} statements. Thank you.`,
      ),
    );
    container.append(done);
    return;
  }

  const { task, notice, inlineError } = state;
  if (notice) {
    container.append(el("p", { class: "banner notice" }, notice));
  }
  container.append(
    el(
      "p",
      { class: "progress" },
      `Statement ${task.progress.completed + 1} of ${task.progress.total}`,
    ),
  );
  container.append(el("blockquote", { class: "statement" }, task.statement));
  container.append(
    el("p", { class: "question" }, "Was this written by a human participant or an AI?"),
  );

  const form = el("form", { id: "verdict-form" });
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void session.submit();
  });

  for (const verdict of ["Human", "AI"] as const) {
    const label = el("label", { class: "verdict-option" });
    const radio = el("input", {
      type: "radio",
      name: "verdict",
      value: verdict,
    }) as HTMLInputElement;
    radio.checked = session.form.verdict === verdict;
    radio.addEventListener("change", () => session.setVerdict(verdict));
    label.append(radio, document.createTextNode(` ${verdict}`));
    form.append(label);
  }

  const reasoning = el("textarea", {
    id: "reasoning",
    rows: "3",
    placeholder: "Why do you think so? (required)",
  }) as HTMLTextAreaElement;
  reasoning.value = session.form.reasoning;
  reasoning.addEventListener("input", () => session.setReasoning(reasoning.value));
  form.append(reasoning);

  const submit = el("button", { id: "submit", type: "submit" }, "Submit verdict") as HTMLButtonElement;
  submit.disabled = !formValid(session.form);
  form.append(submit);

  if (inlineError) {
    form.append(el("p", { class: "banner error", role: "alert" }, inlineError));
  }
  container.append(form);
}

function formatScore(value: number): string {
  return value.toFixed(3);
}

export function renderAgreement(container: HTMLElement, view: AgreementView | null): void {
  container.replaceChildren();
  container.append(el("h2", {}, "Inter-rater agreement"));

  if (view === null) {
    container.append(el("p", { class: "status" }, "Agreement unavailable."));
    return;
  }
  if (view.status === "insufficient_overlap") {
    container.append(
      el(
        "p",
        { class: "placeholder" },
        "Not enough overlap yet: agreement needs at least two annotators sharing a statement.",
      ),
    );
    return;
  }

  container.append(
    el(
      "p",
      { class: "summary" },
      `Mean raw agreement ${formatScore(view.meanAgreement ?? 0)} / mean kappa ${formatScore(view.meanKappa ?? 0)} over ${view.nAnnotations} annotations.`,
    ),
  );

  const table = el("table", { class: "pairs" });
  const head = el("tr");
  for (const column of ["Pair", "Shared", "Agreement", "Kappa"]) {
    head.append(el("th", {}, column));
  }
  table.append(head);
  for (const pair of view.pairs) {
    const row = el("tr");
    row.append(el("td", {}, `${pair.annotatorA} / ${pair.annotatorB}`));
    row.append(el("td", {}, String(pair.sharedTasks)));
    row.append(el("td", { class: "agreement-value" }, formatScore(pair.agreement)));
    row.append(el("td", { class: "kappa-value" }, formatScore(pair.kappa)));
    table.append(row);
  }
  container.append(table);
}
