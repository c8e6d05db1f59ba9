/** Console entry point: one event-stream subscription drives a pure view
 * model; user actions are independent HTTP posts; refreshes are triggered
 * per scrape event rather than on a wall-clock timer. */

import { ApiClient, ApiError } from "./api.js";
import { applyEvent, emptyModel, expireOverdue, settleApproval } from "./model.js";
import { EventStream } from "./stream.js";
import {
  renderApprovals,
  renderAudit,
  renderOverview,
  renderReport,
  renderWhatIf,
} from "./views.js";

type ViewName = "overview" | "approvals" | "whatif" | "audit" | "reports";

const api = new ApiClient("");
let model = emptyModel();
let activeView: ViewName = "overview";
let connected = false;
let rendering = false;

function viewRoot(): HTMLElement {
  return document.getElementById("view") as HTMLElement;
}

function setStale(stale: boolean): void {
  const badge = document.getElementById("stale-badge");
  if (badge) badge.hidden = !stale;
}

async function refresh(): Promise<void> {
  if (rendering) return;
  rendering = true;
  try {
    model = expireOverdue(model);
    const root = viewRoot();
    let next: HTMLElement;
    if (activeView === "overview") {
      const [state, latency, rps] = await Promise.all([
        api.state(),
        api.metrics("p95_latency_ms", 1800),
        api.metrics("rps", 1800),
      ]);
      model.clock_s = Math.max(model.clock_s, state.clock_s);
      next = renderOverview(state, latency, rps, model);
    } else if (activeView === "approvals") {
      const pending = await api.approvals();
      next = renderApprovals(pending, model, onDecide);
    } else if (activeView === "whatif") {
      const state = await api.state();
      next = renderWhatIf(Object.keys(state.services), onInject);
    } else if (activeView === "audit") {
      next = renderAudit(await api.audit());
    } else {
      next = renderReport(await api.report());
    }
    root.replaceChildren(next);
  } finally {
    rendering = false;
  }
}

function onDecide(actionId: string, decision: "approve" | "deny"): void {
  api
    .decide(actionId, decision)
    .then(() => {
      model = settleApproval(
        model, actionId, decision === "approve" ? "executed" : "denied");
      return refresh();
    })
    .catch((err: unknown) => {
      // Conflict/expiry is authoritative; surface it verbatim and re-render.
      alert(err instanceof ApiError ? err.detail : String(err));
      void refresh();
    });
}

function onInject(form: { kind: string; service: string; magnitude: number }): void {
  const errorBox = document.getElementById("inject-error");
  api
    .injectFault(form)
    .then(() => {
      if (errorBox) errorBox.textContent = `injected ${form.kind} on ${form.service}`;
    })
    .catch((err: unknown) => {
      if (errorBox) {
        errorBox.textContent =
          err instanceof ApiError ? `error: ${err.detail}` : String(err);
      }
    });
}

function startStream(): void {
  const stream = new EventStream({
    url: "/events",
    onEvent: (event) => {
      model = applyEvent(model, event);
      // Scrapes pace the dashboard; decision/violation events matter to
      // the approvals and audit views immediately.
      if (
        event.kind === "scrape" ||
        activeView === "approvals" ||
        activeView === "audit"
      ) {
        void refresh();
      }
    },
    onStatus: (up) => {
      connected = up;
      setStale(!connected);
    },
  });
  stream.connect();
}

function wireTabs(): void {
  for (const button of document.querySelectorAll<HTMLButtonElement>("nav button")) {
    button.addEventListener("click", () => {
      activeView = button.dataset.view as ViewName;
      for (const other of document.querySelectorAll("nav button")) {
        other.classList.toggle("active", other === button);
      }
      void refresh();
    });
  }
}

wireTabs();
startStream();
void refresh();
