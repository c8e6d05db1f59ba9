"""Control plane: declarative policy evaluation, the approval gate for
high-risk actions, audited execution, the baseline's manual-triage path, and
policy-violation / autonomy accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .intelligence import ProposedAction
from .simcluster import ActionKind, ClusterState, FaultKind, SimError

APPROVAL_TIMEOUT_S_DEFAULT = 120
TIMEOUT_DECISION_DEFAULT = "deny"
RATE_LIMIT_MAX_ACTIONS = 5
RATE_LIMIT_WINDOW_S = 600
TRIAGE_MEDIAN_S = 150.0
TRIAGE_SIGMA_LOG = 0.35


class PolicyError(Exception):
    pass


class Verdict(str, Enum):
    ALLOW = "allow"
    DENY = "deny"
    REQUIRE_APPROVAL = "require_approval"


class ActionStatus(str, Enum):
    PROPOSED = "proposed"
    PENDING_APPROVAL = "pending_approval"
    APPROVED = "approved"
    DENIED = "denied"
    EXECUTED = "executed"
    EXPIRED = "expired"


RULE_KINDS = ("replica_bounds", "forbidden_action", "rate_limit",
              "approval_required", "drift_forbidden")


@dataclass(frozen=True)
class PolicyRule:
    id: str
    kind: str
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in RULE_KINDS:
            raise PolicyError(f"rule {self.id}: unknown kind {self.kind!r}")
        if self.kind == "replica_bounds":
            if "min" not in self.params or "max" not in self.params:
                raise PolicyError(f"rule {self.id}: replica_bounds needs min/max")
        if self.kind == "forbidden_action" and "actions" not in self.params:
            raise PolicyError(f"rule {self.id}: forbidden_action needs actions")
        if self.kind == "rate_limit":
            if self.params.get("max_actions", 0) < 1:
                raise PolicyError(f"rule {self.id}: rate_limit needs max_actions >= 1")
        if self.kind == "approval_required" and "risks" not in self.params:
            raise PolicyError(f"rule {self.id}: approval_required needs risks")


@dataclass(frozen=True)
class PolicySet:
    rules: tuple

    def __post_init__(self):
        seen = set()
        for rule in self.rules:
            rule.validate()
            if rule.id in seen:
                raise PolicyError(f"duplicate rule id {rule.id!r}")
            seen.add(rule.id)

    def by_kind(self, kind: str):
        return [r for r in self.rules if r.kind == kind]


def default_policy_set(min_replicas: int = 1, max_replicas: int = 16) -> PolicySet:
    return PolicySet(rules=(
        PolicyRule("replica-bounds", "replica_bounds",
                   {"min": min_replicas, "max": max_replicas}),
        PolicyRule("drift-forbidden", "drift_forbidden", {}),
        PolicyRule("approval-high-risk", "approval_required", {"risks": ["high"]}),
        PolicyRule("rate-limit", "rate_limit",
                   {"max_actions": RATE_LIMIT_MAX_ACTIONS,
                    "window_s": RATE_LIMIT_WINDOW_S}),
    ))


@dataclass
class AuditEntry:
    ts_s: int
    seq: int
    actor: str
    action_id: str
    verdict: str
    rules: list
    detail: str = ""


@dataclass
class ViolationRecord:
    ts_s: int
    rule_id: str
    service: str
    detail: str


@dataclass
class ApprovalRequest:
    action_id: str
    created_ts: int
    deadline_ts: int
    decision: Optional[str] = None
    decided_by: Optional[str] = None


@dataclass
class RemediationAction:
    id: str
    proposal: ProposedAction
    status: ActionStatus = ActionStatus.PROPOSED
    verdict_trail: list = field(default_factory=list)
    timestamps: dict = field(default_factory=dict)
    decided_by: Optional[str] = None
    approval: Optional[ApprovalRequest] = None
    execute_at_s: Optional[int] = None  # delayed execution (baseline triage)
    execution_result: Optional[dict] = None


class AuditLog:
    """Append-only, totally ordered by (ts, seq)."""

    def __init__(self):
        self.entries: list[AuditEntry] = []
        self._seq = 0

    def record(self, ts_s: int, actor: str, action_id: str, verdict: str,
               rules: list, detail: str = "") -> AuditEntry:
        self._seq += 1
        entry = AuditEntry(ts_s=ts_s, seq=self._seq, actor=actor,
                           action_id=action_id, verdict=verdict,
                           rules=list(rules), detail=detail)
        self.entries.append(entry)
        return entry

    def executed_in_window(self, service: str, t_from: int, t_to: int) -> int:
        return sum(1 for e in self.entries
                   if e.verdict == "executed" and e.detail == service
                   and t_from <= e.ts_s <= t_to)


def evaluate_policy(action: ProposedAction, policies: PolicySet,
                    desired_replicas: int, audit: AuditLog,
                    clock_s: int) -> tuple:
    """Return (verdict, trail). Deny overrides approval overrides allow."""
    trail = []
    deny = False
    needs_approval = False
    for rule in policies.rules:
        trail.append(rule.id)
        if rule.kind == "forbidden_action":
            if action.kind.value in rule.params["actions"]:
                deny = True
        elif rule.kind == "replica_bounds":
            if action.kind == ActionKind.SCALE_UP:
                target = desired_replicas + action.amount
                if target > rule.params["max"]:
                    deny = True
            elif action.kind == ActionKind.SCALE_DOWN:
                target = desired_replicas - action.amount
                if target < rule.params["min"]:
                    deny = True
        elif rule.kind == "rate_limit":
            window = rule.params.get("window_s", RATE_LIMIT_WINDOW_S)
            executed = audit.executed_in_window(
                action.service, clock_s - window, clock_s)
            if executed >= rule.params["max_actions"]:
                deny = True
        elif rule.kind == "approval_required":
            if action.risk in rule.params["risks"]:
                needs_approval = True
        # drift_forbidden constrains state, not actions; consulted only.
    if deny:
        return Verdict.DENY, trail
    if needs_approval:
        return Verdict.REQUIRE_APPROVAL, trail
    return Verdict.ALLOW, trail


class ActionGate:
    """Applies verdicts, holds approvals, and executes approved actions."""

    def __init__(self, policies: PolicySet, audit: AuditLog,
                 approval_timeout_s: int = APPROVAL_TIMEOUT_S_DEFAULT,
                 timeout_decision: str = TIMEOUT_DECISION_DEFAULT):
        self.policies = policies
        self.audit = audit
        self.approval_timeout_s = approval_timeout_s
        self.timeout_decision = timeout_decision
        self.actions: list[RemediationAction] = []
        self._counter = 0

    def submit(self, proposal: ProposedAction, desired_replicas: int,
               clock_s: int, actor: str = "engine",
               pre_decided_by: Optional[str] = None) -> RemediationAction:
        """Evaluate and gate one proposal.

        pre_decided_by='operator' models the baseline's manual path, where the
        human performing triage is also the approver.
        """
        self._counter += 1
        action = RemediationAction(id=f"act-{self._counter:04d}",
                                   proposal=proposal)
        action.timestamps["proposed"] = clock_s
        verdict, trail = evaluate_policy(proposal, self.policies,
                                         desired_replicas, self.audit, clock_s)
        action.verdict_trail = trail
        if verdict == Verdict.DENY:
            action.status = ActionStatus.DENIED
            action.timestamps["denied"] = clock_s
            self.audit.record(clock_s, actor, action.id, "denied", trail,
                              detail=proposal.service)
        elif verdict == Verdict.REQUIRE_APPROVAL and pre_decided_by is None:
            action.status = ActionStatus.PENDING_APPROVAL
            action.approval = ApprovalRequest(
                action_id=action.id, created_ts=clock_s,
                deadline_ts=clock_s + self.approval_timeout_s)
            action.timestamps["pending_approval"] = clock_s
            self.audit.record(clock_s, actor, action.id, "pending_approval",
                              trail, detail=proposal.service)
        else:
            action.status = ActionStatus.APPROVED
            action.decided_by = pre_decided_by
            action.timestamps["approved"] = clock_s
            self.audit.record(clock_s, pre_decided_by or actor, action.id,
                              "approved", trail, detail=proposal.service)
        self.actions.append(action)
        return action

    def decide(self, action_id: str, decision: str, clock_s: int,
               decided_by: str = "operator") -> RemediationAction:
        action = self.by_id(action_id)
        if action.status != ActionStatus.PENDING_APPROVAL:
            raise PolicyError(f"action {action_id} is not pending approval")
        action.approval.decision = decision
        action.approval.decided_by = decided_by
        action.decided_by = decided_by
        if decision == "approve":
            action.status = ActionStatus.APPROVED
            action.timestamps["approved"] = clock_s
        else:
            action.status = ActionStatus.DENIED
            action.timestamps["denied"] = clock_s
        self.audit.record(clock_s, decided_by, action.id,
                          action.status.value, action.verdict_trail,
                          detail=action.proposal.service)
        return action

    def process_deadlines(self, clock_s: int) -> list:
        """Resolve overdue approvals with the configured timeout decision."""
        resolved = []
        for action in self.actions:
            if (action.status == ActionStatus.PENDING_APPROVAL
                    and clock_s >= action.approval.deadline_ts):
                if self.timeout_decision == "approve":
                    self.decide(action.id, "approve", clock_s,
                                decided_by="timeout_policy")
                else:
                    action.approval.decision = "deny"
                    action.approval.decided_by = "timeout_policy"
                    action.decided_by = "timeout_policy"
                    action.status = ActionStatus.EXPIRED
                    action.timestamps["expired"] = clock_s
                    self.audit.record(clock_s, "timeout_policy", action.id,
                                      "expired", action.verdict_trail,
                                      detail=action.proposal.service)
                resolved.append(action)
        return resolved

    def execute(self, action: RemediationAction, state: ClusterState,
                clock_s: int) -> dict:
        if action.status != ActionStatus.APPROVED:
            raise PolicyError(
                f"cannot execute action {action.id} in status {action.status.value}")
        try:
            result = state.apply_action(action.proposal.kind,
                                        action.proposal.service,
                                        action.proposal.amount)
        except SimError as exc:
            action.status = ActionStatus.DENIED
            action.timestamps["denied"] = clock_s
            self.audit.record(clock_s, "engine", action.id, "denied",
                              action.verdict_trail, detail=str(exc))
            return {"error": str(exc)}
        action.status = ActionStatus.EXECUTED
        action.timestamps["executed"] = clock_s
        action.execution_result = result
        # No-op executions are audited but exempt from the rate limit: they
        # do not mutate the cluster, so they cannot feed a remediation storm.
        detail = action.proposal.service
        if result.get("noop"):
            detail += "/noop"
        self.audit.record(clock_s, "engine", action.id, "executed",
                          action.verdict_trail, detail=detail)
        return result

    def run_due(self, state: ClusterState, clock_s: int) -> list:
        """Execute approved actions whose (possibly delayed) time has come."""
        executed = []
        for action in self.actions:
            if action.status != ActionStatus.APPROVED:
                continue
            due = action.execute_at_s is None or clock_s >= action.execute_at_s
            if due:
                self.execute(action, state, clock_s)
                executed.append(action)
        return executed

    def pending(self) -> list:
        return [a for a in self.actions
                if a.status == ActionStatus.PENDING_APPROVAL]

    def by_id(self, action_id: str) -> RemediationAction:
        for action in self.actions:
            if action.id == action_id:
                return action
        raise PolicyError(f"unknown action {action_id!r}")


# ---- baseline manual triage ------------------------------------------------

CORRECT_REMEDIATION = {
    FaultKind.CPU_SATURATION: ActionKind.RESTART_POD,
    FaultKind.POD_EVICTION: ActionKind.RESTART_POD,
    FaultKind.CONFIG_DRIFT: ActionKind.ROLLBACK_CONFIG,
}


def triage_delay_s(rng: np.random.Generator,
                   median_s: float = TRIAGE_MEDIAN_S,
                   sigma_log: float = TRIAGE_SIGMA_LOG) -> float:
    """Seeded lognormal human diagnosis+action delay."""
    return float(rng.lognormal(mean=math.log(median_s), sigma=sigma_log))


def baseline_triage(gate: ActionGate, fault_kind: FaultKind, service: str,
                    desired_replicas: int, clock_s: int,
                    rng: np.random.Generator, mode: str) -> RemediationAction:
    """Schedule the correct remediation after a sampled manual delay."""
    if mode != "baseline":
        raise PolicyError("baseline_triage is only valid in baseline mode")
    kind = CORRECT_REMEDIATION[fault_kind]
    proposal = ProposedAction(kind=kind, service=service, amount=0,
                              risk="high" if kind in
                              (ActionKind.ROLLBACK_CONFIG, ActionKind.SCALE_DOWN)
                              else "low",
                              rationale="manual_triage")
    action = gate.submit(proposal, desired_replicas, clock_s,
                         actor="operator", pre_decided_by="operator")
    if action.status == ActionStatus.APPROVED:
        action.execute_at_s = clock_s + int(round(triage_delay_s(rng)))
    return action


# ---- measurement -----------------------------------------------------------

def count_violations(violations: list, t_from: int, t_to: int) -> float:
    """Violation findings per hour over the window.

    Each scrape at which a violating condition holds yields one finding per
    (rule, service); continuous enforcement that clears a condition quickly
    therefore accrues fewer findings than one that lets it persist.
    """
    hours = (t_to - t_from) / 3600.0
    if hours <= 0:
        raise PolicyError("empty violation window")
    n = sum(1 for v in violations if t_from <= v.ts_s <= t_to)
    return n / hours


def violation_episodes(violations: list, t_from: int, t_to: int,
                       scrape_interval_s: int = 30) -> int:
    """Contiguous-episode count per (rule, service) within the window."""
    per_key: dict = {}
    for v in sorted(violations, key=lambda v: v.ts_s):
        if not t_from <= v.ts_s <= t_to:
            continue
        per_key.setdefault((v.rule_id, v.service), []).append(v.ts_s)
    episodes = 0
    for ts_list in per_key.values():
        prev = None
        for ts in ts_list:
            if prev is None or ts - prev > scrape_interval_s:
                episodes += 1
            prev = ts
    return episodes


def autonomy_rate(actions: list) -> Optional[float]:
    """Percent of executed actions decided without a human operator."""
    executed = [a for a in actions if a.status == ActionStatus.EXECUTED]
    if not executed:
        return None
    auto = sum(1 for a in executed if a.decided_by != "operator")
    return 100.0 * auto / len(executed)
