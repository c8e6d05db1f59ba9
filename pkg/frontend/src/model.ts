/** Client-side view model: a pure fold over the event stream.
 *
 * The model mirrors server payloads for display; it never derives metrics
 * beyond grouping and counting what the API already reported. */

import type { StreamEvent } from "./stream.js";

export const TIMELINE_LIMIT = 250;

export interface TimelineEntry {
  seq: number;
  ts_s: number;
  kind: string;
  label: string;
}

export interface ApprovalCard {
  action_id: string;
  service: string;
  kind: string;
  deadline_ts: number;
  /** pending | executed | denied | expired — from subsequent events. */
  status: string;
}

export interface ViewModel {
  lastSeq: number;
  clock_s: number;
  scrapes: number;
  anomalies: number;
  violations: number;
  executed: number;
  openIncidents: number;
  timeline: TimelineEntry[];
  approvals: ApprovalCard[];
}

export function emptyModel(): ViewModel {
  return {
    lastSeq: 0,
    clock_s: 0,
    scrapes: 0,
    anomalies: 0,
    violations: 0,
    executed: 0,
    openIncidents: 0,
    timeline: [],
    approvals: [],
  };
}

function label(event: StreamEvent): string {
  const p = event.payload;
  switch (event.kind) {
    case "incident_opened":
      return `${p.fault_kind} on ${p.service} (${p.incident_id})`;
    case "incident_recovered":
      return `${p.service} recovered (${p.incident_id})`;
    case "anomaly":
      return `${p.service} score ${p.score} via ${p.trigger}`;
    case "action_proposed":
      return `${p.kind} ${p.service} -> ${p.status}`;
    case "approval_pending":
      return `${p.kind} ${p.service} awaiting approval`;
    case "action_executed":
      return `${p.kind} ${p.service} by ${p.decided_by ?? "engine"}`;
    case "violation":
      return `${p.rule_id}: ${p.detail}`;
    default:
      return event.kind;
  }
}

function withTimeline(model: ViewModel, event: StreamEvent): TimelineEntry[] {
  if (event.kind === "scrape") return model.timeline;
  const entry: TimelineEntry = {
    seq: event.seq,
    ts_s: event.ts_s,
    kind: event.kind,
    label: label(event),
  };
  const timeline = [...model.timeline, entry];
  return timeline.length > TIMELINE_LIMIT
    ? timeline.slice(timeline.length - TIMELINE_LIMIT)
    : timeline;
}

/** Pure reducer: returns a new model, never mutates the input. */
export function applyEvent(model: ViewModel, event: StreamEvent): ViewModel {
  const next: ViewModel = {
    ...model,
    lastSeq: event.seq,
    clock_s: Math.max(model.clock_s, event.ts_s),
    timeline: withTimeline(model, event),
    approvals: model.approvals.map((a) => ({ ...a })),
  };
  const p = event.payload;
  switch (event.kind) {
    case "scrape":
      next.scrapes += 1;
      break;
    case "anomaly":
      next.anomalies += 1;
      break;
    case "violation":
      next.violations += 1;
      break;
    case "incident_opened":
      next.openIncidents += 1;
      break;
    case "incident_recovered":
      next.openIncidents = Math.max(0, next.openIncidents - 1);
      break;
    case "approval_pending":
      next.approvals = [
        ...next.approvals,
        {
          action_id: String(p.action_id),
          service: String(p.service),
          kind: String(p.kind),
          deadline_ts: Number(p.deadline_ts),
          status: "pending",
        },
      ];
      break;
    case "action_executed": {
      next.executed += 1;
      next.approvals = next.approvals.map((a) =>
        a.action_id === p.action_id ? { ...a, status: "executed" } : a,
      );
      break;
    }
    case "action_proposed": {
      // A proposal that arrives already denied/expired settles its card.
      const status = String(p.status ?? "");
      if (status === "denied" || status === "expired") {
        next.approvals = next.approvals.map((a) =>
          a.action_id === p.action_id ? { ...a, status } : a,
        );
      }
      break;
    }
    default:
      break;
  }
  return next;
}

/** Cards still awaiting a decision whose deadline has not passed. */
export function actionableApprovals(model: ViewModel): ApprovalCard[] {
  return model.approvals.filter(
    (a) => a.status === "pending" && a.deadline_ts > model.clock_s,
  );
}

/** Settle any pending card whose deadline the clock has passed. */
export function expireOverdue(model: ViewModel): ViewModel {
  return {
    ...model,
    approvals: model.approvals.map((a) =>
      a.status === "pending" && a.deadline_ts <= model.clock_s
        ? { ...a, status: "expired" }
        : a,
    ),
  };
}

/** Mark a card after the operator's decision was acknowledged by the API. */
export function settleApproval(
  model: ViewModel,
  actionId: string,
  status: "executed" | "denied",
): ViewModel {
  return {
    ...model,
    approvals: model.approvals.map((a) =>
      a.action_id === actionId ? { ...a, status } : a,
    ),
  };
}
