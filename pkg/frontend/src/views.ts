/** DOM renderers for the five console views. Render-only: every value is
 * taken verbatim from an API payload or the event-stream view model. */

import type {
  AuditEntry,
  MetricSeries,
  PendingApproval,
  RunReport,
  StateSummary,
} from "./api.js";
import { axisTicks, polylinePoints, seriesScale, type ChartBox } from "./chart.js";
import { actionableApprovals, type ViewModel } from "./model.js";

const BOX: ChartBox = { width: 560, height: 160, pad: 24 };

function el(tag: string, className = "", text = ""): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function fmtClock(ts: number): string {
  const m = Math.floor(ts / 60);
  const s = ts % 60;
  return `${m}m${String(s).padStart(2, "0")}s`;
}

export function renderChart(
  title: string,
  series: MetricSeries,
  unit: string,
): HTMLElement {
  const card = el("section", "card");
  card.appendChild(el("h3", "", title));
  const svgNs = "http://www.w3.org/2000/svg";
  const svg = document.createElementNS(svgNs, "svg");
  svg.setAttribute("viewBox", `0 0 ${BOX.width} ${BOX.height}`);
  svg.setAttribute("class", "chart");
  const palette = ["#4cc2ff", "#ffb454", "#9fff8c", "#ff7ab8"];
  let colorIdx = 0;
  const allValues: number[] = [];
  for (const points of Object.values(series.series)) {
    for (const [, v] of points) allValues.push(v);
  }
  const yScale = seriesScale(allValues);
  for (const tick of axisTicks(yScale)) {
    const label = document.createElementNS(svgNs, "text");
    label.setAttribute("x", "2");
    const frac = (tick - yScale.min) / (yScale.max - yScale.min);
    const y = BOX.height - BOX.pad - frac * (BOX.height - 2 * BOX.pad);
    label.setAttribute("y", String(y));
    label.setAttribute("class", "tick");
    label.textContent = tick.toFixed(unit === "ratio" ? 3 : 0);
    svg.appendChild(label);
  }
  for (const [service, points] of Object.entries(series.series)) {
    const line = document.createElementNS(svgNs, "polyline");
    line.setAttribute("points", polylinePoints(points, BOX));
    line.setAttribute("fill", "none");
    line.setAttribute("stroke", palette[colorIdx % palette.length]);
    line.setAttribute("stroke-width", "1.5");
    colorIdx += 1;
    const name = document.createElementNS(svgNs, "title");
    name.textContent = service;
    line.appendChild(name);
    svg.appendChild(line);
  }
  card.appendChild(svg);
  return card;
}

export function renderStateCards(state: StateSummary): HTMLElement {
  const wrap = el("div", "cards");
  for (const [name, svc] of Object.entries(state.services)) {
    const card = el("section", svc.drifted ? "card drifted" : "card");
    card.appendChild(el("h3", "", name));
    const rows: [string, string][] = [
      ["replicas", `${svc.available_replicas}/${svc.desired_replicas}`],
      ["p95", `${svc.p95_latency_ms.toFixed(1)} ms`],
      ["errors", `${(svc.error_rate * 100).toFixed(2)}%`],
      ["served", `${svc.served_rps.toFixed(1)} rps`],
      ["cpu", `${svc.cpu_vcpu.toFixed(2)} vCPU`],
      ["drift", svc.drifted ? "ACTIVE" : "none"],
    ];
    const dl = el("dl");
    for (const [k, v] of rows) {
      dl.appendChild(el("dt", "", k));
      dl.appendChild(el("dd", "", v));
    }
    card.appendChild(dl);
    wrap.appendChild(card);
  }
  return wrap;
}

export function renderTimeline(model: ViewModel): HTMLElement {
  const card = el("section", "card");
  card.appendChild(el("h3", "", "Timeline"));
  const list = el("ul", "timeline");
  for (const entry of [...model.timeline].reverse().slice(0, 40)) {
    const item = el("li", `evt evt-${entry.kind}`);
    item.appendChild(el("span", "ts", fmtClock(entry.ts_s)));
    item.appendChild(el("span", "kind", entry.kind));
    item.appendChild(el("span", "label", entry.label));
    list.appendChild(item);
  }
  card.appendChild(list);
  return card;
}

export function renderOverview(
  state: StateSummary,
  latency: MetricSeries,
  rps: MetricSeries,
  model: ViewModel,
): HTMLElement {
  const view = el("div", "view");
  const status = el("p", "statusline",
    `mode=${state.mode}  clock=${fmtClock(state.clock_s)}  ` +
    `open incidents=${model.openIncidents}  anomalies=${model.anomalies}  ` +
    `violations=${model.violations}  executed=${model.executed}`);
  view.appendChild(status);
  view.appendChild(renderStateCards(state));
  view.appendChild(renderChart("p95 latency (ms)", latency, "ms"));
  view.appendChild(renderChart("served rps", rps, "rps"));
  view.appendChild(renderTimeline(model));
  return view;
}

export function renderApprovals(
  pending: PendingApproval[],
  model: ViewModel,
  onDecide: (actionId: string, decision: "approve" | "deny") => void,
): HTMLElement {
  const view = el("div", "view");
  view.appendChild(el("h2", "", "Approval queue"));
  const actionable = new Set(
    actionableApprovals(model).map((a) => a.action_id),
  );
  if (pending.length === 0) {
    view.appendChild(el("p", "empty", "No pending approvals."));
  }
  for (const req of pending) {
    const live = actionable.size === 0 || actionable.has(req.action_id);
    const card = el("section", live ? "card approval" : "card approval stale");
    card.appendChild(el("h3", "", `${req.kind} on ${req.service}`));
    card.appendChild(el("p", "", `risk=${req.risk}  id=${req.action_id}`));
    card.appendChild(
      el("p", "deadline", `deadline ${fmtClock(req.deadline_ts)}`),
    );
    const buttons = el("div", "buttons");
    for (const decision of ["approve", "deny"] as const) {
      const button = el("button", decision, decision) as HTMLButtonElement;
      button.disabled = !live;
      button.addEventListener("click", () => onDecide(req.action_id, decision));
      buttons.appendChild(button);
    }
    card.appendChild(buttons);
    view.appendChild(card);
  }
  return view;
}

export function renderWhatIf(
  services: string[],
  onInject: (form: { kind: string; service: string; magnitude: number }) => void,
): HTMLElement {
  const view = el("div", "view");
  view.appendChild(el("h2", "", "What-if fault injection"));
  const form = el("form", "card") as HTMLFormElement;
  const kind = el("select") as HTMLSelectElement;
  for (const k of ["cpu_saturation", "pod_eviction", "config_drift"]) {
    const option = el("option", "", k) as HTMLOptionElement;
    option.value = k;
    kind.appendChild(option);
  }
  const service = el("input") as HTMLInputElement;
  service.value = services[0] ?? "web";
  const magnitude = el("input") as HTMLInputElement;
  magnitude.type = "number";
  magnitude.step = "any";
  magnitude.value = "0.5";
  const submit = el("button", "", "inject") as HTMLButtonElement;
  submit.type = "submit";
  for (const [labelText, control] of [
    ["kind", kind],
    ["service", service],
    ["magnitude", magnitude],
  ] as const) {
    const row = el("label", "row", labelText + " ");
    row.appendChild(control);
    form.appendChild(row);
  }
  form.appendChild(submit);
  const error = el("p", "error");
  error.id = "inject-error";
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    onInject({
      kind: kind.value,
      service: service.value,
      magnitude: Number(magnitude.value),
    });
  });
  view.appendChild(form);
  view.appendChild(error);
  return view;
}

export function renderAudit(entries: AuditEntry[]): HTMLElement {
  const view = el("div", "view");
  view.appendChild(el("h2", "", "Audit log"));
  const table = el("table", "audit");
  const head = el("tr");
  for (const h of ["ts", "seq", "actor", "action", "verdict", "rules"]) {
    head.appendChild(el("th", "", h));
  }
  table.appendChild(head);
  for (const entry of [...entries].reverse()) {
    const row = el("tr", `verdict-${entry.verdict}`);
    row.appendChild(el("td", "", fmtClock(entry.ts)));
    row.appendChild(el("td", "", String(entry.seq)));
    row.appendChild(el("td", "", entry.actor));
    row.appendChild(el("td", "", entry.action));
    row.appendChild(el("td", "", entry.verdict));
    row.appendChild(el("td", "", entry.rules.join(", ")));
    table.appendChild(row);
  }
  view.appendChild(table);
  return view;
}

export function renderReport(report: RunReport): HTMLElement {
  const view = el("div", "view");
  view.appendChild(el("h2", "", "Run report"));
  const summary = el("section", "card");
  const dl = el("dl");
  const rows: [string, string][] = [
    ["clock", fmtClock(report.clock_s)],
    ["incidents", `${report.incidents_resolved}/${report.incidents_total} resolved`],
    ["mean MTTR", report.mean_mttr_s === null
      ? "n/a" : `${report.mean_mttr_s.toFixed(1)} s`],
    ["violations", String(report.violations)],
    ["actions executed", String(report.actions_executed)],
  ];
  for (const [k, v] of rows) {
    dl.appendChild(el("dt", "", k));
    dl.appendChild(el("dd", "", v));
  }
  summary.appendChild(dl);
  view.appendChild(summary);

  const table = el("table", "audit");
  const head = el("tr");
  for (const h of ["id", "service", "fault", "injected", "detected", "recovered"]) {
    head.appendChild(el("th", "", h));
  }
  table.appendChild(head);
  for (const inc of report.incidents) {
    const row = el("tr");
    row.appendChild(el("td", "", inc.id));
    row.appendChild(el("td", "", inc.service));
    row.appendChild(el("td", "", inc.fault_kind));
    row.appendChild(el("td", "", fmtClock(inc.t_injected_s)));
    row.appendChild(el("td", "",
      inc.t_detected_s === null ? "-" : fmtClock(inc.t_detected_s)));
    row.appendChild(el("td", "",
      inc.t_recovered_s === null ? "-" : fmtClock(inc.t_recovered_s)));
    table.appendChild(row);
  }
  view.appendChild(table);
  return view;
}
