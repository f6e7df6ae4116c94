/**
 * Bootstrap: ask for an annotator id, run the session, poll agreement.
 * Single page, no routing, no persistence beyond the in-progress form.
 */

import { ApiClient } from "./api";
import { ReviewSession } from "./session";
import { renderAgreement, renderSession } from "./view";

const AGREEMENT_POLL_MS = 2000;

function start(): void {
  const taskPane = document.getElementById("task-pane");
  const agreementPane = document.getElementById("agreement-pane");
  const loginPane = document.getElementById("login-pane");
  if (!taskPane || !agreementPane || !loginPane) {
    throw new Error("missing page skeleton");
  }

  const api = new ApiClient("");
  const input = loginPane.querySelector("input") as HTMLInputElement;
  const button = loginPane.querySelector("button") as HTMLButtonElement;

  button.addEventListener("click", () => {
    const annotatorId = input.value.trim();
    if (!annotatorId) {
      input.focus();
      return;
    }
    loginPane.hidden = true;
    taskPane.hidden = false;
    agreementPane.hidden = false;

    const session = new ReviewSession(api, annotatorId, (current) =>
      renderSession(taskPane, current),
    );
    void session.loadNext();

    const poll = async (): Promise<void> => {
      try {
        renderAgreement(agreementPane, await api.agreement());
      } catch {
        renderAgreement(agreementPane, null);
      }
    };
    void poll();
    window.setInterval(() => void poll(), AGREEMENT_POLL_MS);
  });
}

document.addEventListener("DOMContentLoaded", start);
