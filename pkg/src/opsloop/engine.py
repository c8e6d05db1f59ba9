"""The closed-loop engine: advances the simulated cluster one second at a
time and, on each scrape, runs the sense -> reason -> act pipeline for the
configured operation mode (baseline: static alerts + manual triage; cpe:
isolation-forest detection + policy-gated automatic remediation)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import control, intelligence, telemetry
from .control import ActionGate, AuditLog, PolicySet, ViolationRecord
from .intelligence import (BreachStreaks, FeatureVector, IsolationForestModel,
                           ServiceSnapshot, UtilizationWatch)
from .simcluster import (FaultEvent, FaultKind, SCRAPE_INTERVAL_S,
                         init_cluster)
from .telemetry import (IncidentTracker, MetricStore, SloSpec,
                        scrape, evaluate_slo)

MODE_BASELINE = "baseline"
MODE_CPE = "cpe"


@dataclass
class ApiEvent:
    seq: int
    ts_s: int
    kind: str
    payload: dict


class EventBus:
    """In-process ordered event stream with replay support."""

    def __init__(self):
        self.events: list[ApiEvent] = []
        self._seq = 0
        self._listeners: list[Callable[[ApiEvent], None]] = []

    def emit(self, ts_s: int, kind: str, payload: dict) -> ApiEvent:
        self._seq += 1
        event = ApiEvent(seq=self._seq, ts_s=ts_s, kind=kind, payload=payload)
        self.events.append(event)
        for listener in self._listeners:
            listener(event)
        return event

    def subscribe(self, listener: Callable[[ApiEvent], None]) -> None:
        self._listeners.append(listener)

    def since(self, after_seq: int) -> list:
        return [e for e in self.events if e.seq > after_seq]


@dataclass
class EngineConfig:
    mode: str
    services: list
    workload: object
    fault_schedule: list
    slo: SloSpec
    policies: PolicySet
    duration_s: int = 5400
    warmup_s: int = 600
    anomaly_threshold: float = intelligence.ANOMALY_THRESHOLD_DEFAULT
    n_trees: int = intelligence.N_TREES_DEFAULT
    subsample: int = intelligence.SUBSAMPLE_DEFAULT
    approval_timeout_s: int = control.APPROVAL_TIMEOUT_S_DEFAULT
    timeout_decision: str = control.TIMEOUT_DECISION_DEFAULT
    noise_sigma: float = 0.03
    triage_median_s: float = control.TRIAGE_MEDIAN_S
    triage_sigma_log: float = control.TRIAGE_SIGMA_LOG


class Engine:
    """One simulation instance plus its data/intelligence/control planes."""

    def __init__(self, config: EngineConfig, seed: int):
        if config.mode not in (MODE_BASELINE, MODE_CPE):
            raise ValueError(f"unknown mode {config.mode!r}")
        self.config = config
        self.mode = config.mode
        self.seed = seed
        # Independent seeded streams; world noise is mode-independent so the
        # baseline and cpe arms of one pair see identical load and faults.
        ss = np.random.SeedSequence(seed)
        world_seed, triage_seed, forest_seed = ss.spawn(3)
        self.state = init_cluster(config.services, config.workload,
                                  list(config.fault_schedule),
                                  seed=int(world_seed.generate_state(1)[0]),
                                  noise_sigma=config.noise_sigma)
        self.triage_rng = np.random.default_rng(triage_seed)
        self.forest_seed = int(forest_seed.generate_state(1)[0])
        self.store = MetricStore()
        self.incidents = IncidentTracker(mode=config.mode)
        self.audit = AuditLog()
        self.gate = ActionGate(config.policies, self.audit,
                               approval_timeout_s=config.approval_timeout_s,
                               timeout_decision=config.timeout_decision)
        self.bus = EventBus()
        self.violations: list[ViolationRecord] = []
        self.model: Optional[IsolationForestModel] = None
        self.breaches = BreachStreaks()
        self.util_watch = UtilizationWatch()
        self.training: list[FeatureVector] = []
        self._prev_p95: dict = {}
        self._seen_injections = 0
        self._triaged_incidents: set = set()
        self.anomaly_reports: list = []
        self.scrape_verdicts: list = []  # (ts, service, verdict)

    # ---- loop --------------------------------------------------------------

    def run(self, until_s: Optional[int] = None,
            on_tick: Optional[Callable[[int], None]] = None) -> None:
        until = until_s if until_s is not None else self.config.duration_s
        while self.state.clock_s < until:
            self.tick()
            if on_tick is not None:
                on_tick(self.state.clock_s)

    def tick(self) -> None:
        self.state.step(1)
        clock = self.state.clock_s
        self._register_new_injections()
        self.gate.process_deadlines(clock)
        for action in self.gate.run_due(self.state, clock):
            self.bus.emit(clock, "action_executed", {
                "action_id": action.id,
                "kind": action.proposal.kind.value,
                "service": action.proposal.service,
                "decided_by": action.decided_by,
            })
        if clock % SCRAPE_INTERVAL_S == 0:
            self._on_scrape(clock)
        if self.mode == MODE_CPE and self.model is None \
                and clock >= self.config.warmup_s:
            self.model = intelligence.fit_forest(
                self.training, seed=self.forest_seed,
                n_trees=self.config.n_trees, psi=self.config.subsample)

    def inject_fault(self, fault: FaultEvent) -> None:
        """External (what-if) fault injection between ticks."""
        self.state.inject_fault(fault)
        self._register_new_injections()

    def _register_new_injections(self) -> None:
        while self._seen_injections < len(self.state.injections):
            marker = self.state.injections[self._seen_injections]
            self._seen_injections += 1
            rec = self.incidents.open_incident(marker.service,
                                               marker.kind.value, marker.t_s)
            self.bus.emit(marker.t_s, "incident_opened", {
                "incident_id": rec.id, "service": marker.service,
                "fault_kind": marker.kind.value})

    # ---- scrape pipeline ---------------------------------------------------

    def _on_scrape(self, clock: int) -> None:
        samples = scrape(self.state, self.store,
                         labels={"mode": self.mode})
        self.bus.emit(clock, "scrape", {
            "ts_s": clock, "samples": len(samples)})
        by_service: dict = {}
        for s in samples:
            by_service.setdefault(s.labels["service"], {})[s.metric] = s.value
        for service in sorted(by_service):
            self._sense_service(clock, service, by_service[service])
        self._scan_policy_violations(clock)

    def _sense_service(self, clock: int, service: str, metrics: dict) -> None:
        rt = self.state.services[service]
        verdict = evaluate_slo(metrics, self.config.slo)
        self.scrape_verdicts.append((clock, service, verdict.value))
        streak = self.breaches.update(service, verdict)
        fv = intelligence.make_feature_vector(
            clock, service, metrics, self._prev_p95.get(service),
            vcpu_capacity=rt.desired_replicas * rt.spec.vcpu_per_replica)
        self._prev_p95[service] = metrics["p95_latency_ms"]
        if clock <= self.config.warmup_s:
            self.training.append(fv)
        incident = self.incidents.open_for(service)

        if self.mode == MODE_CPE:
            self._sense_cpe(clock, service, fv, streak, incident)
        else:
            self._sense_baseline(clock, service, streak, incident)

        # Recovery check runs in both modes on detected open incidents.
        if incident is not None and incident.detected and incident.open:
            recovered = self.incidents.check_recovery(
                incident.id, verdict, rt.available_replicas,
                rt.desired_replicas, rt.drifted, clock)
            if recovered:
                self.bus.emit(clock, "incident_recovered", {
                    "incident_id": incident.id, "service": service,
                    "t_recovered_s": incident.t_recovered_s})

    def _sense_cpe(self, clock, service, fv, streak, incident) -> None:
        if self.model is None and clock <= self.config.warmup_s:
            return  # warm-up: collect training data only
        report = intelligence.detect(self.model, fv, streak,
                                     threshold=self.config.anomaly_threshold)
        snap = self._snapshot(service)
        # The right-sizing watch advances every scrape; its own guards keep
        # it quiet while an incident is disturbing the service.
        scale_down = self.util_watch.update(snap)
        if report is not None:
            self.anomaly_reports.append(report)
            self.bus.emit(clock, "anomaly", {
                "service": service, "score": round(report.score, 4),
                "trigger": report.trigger})
            if incident is not None and incident.open and not incident.detected:
                self.incidents.mark_detected(incident.id, clock,
                                             detector=report.trigger)
            for proposal in intelligence.reason(report, snap):
                self._gate_proposal(proposal, clock)
        if scale_down is not None:
            self._gate_proposal(scale_down, clock)

    def _sense_baseline(self, clock, service, streak, incident) -> None:
        if not intelligence.baseline_alert_rule(streak):
            return
        if incident is None or not incident.open or incident.detected:
            return
        if clock <= self.config.warmup_s:
            return
        self.incidents.mark_detected(incident.id, clock, detector="static_alert")
        rt = self.state.services[service]
        action = control.baseline_triage(
            self.gate, FaultKind(incident.fault_kind), service,
            rt.desired_replicas, clock, self.triage_rng, self.mode)
        self._triaged_incidents.add(incident.id)
        self.bus.emit(clock, "action_proposed", {
            "action_id": action.id, "kind": action.proposal.kind.value,
            "service": service, "status": action.status.value})

    def _gate_proposal(self, proposal, clock) -> None:
        rt = self.state.services[proposal.service]
        action = self.gate.submit(proposal, rt.desired_replicas, clock)
        self.bus.emit(clock, "action_proposed", {
            "action_id": action.id, "kind": proposal.kind.value,
            "service": proposal.service, "status": action.status.value,
            "risk": proposal.risk})
        if action.status == control.ActionStatus.PENDING_APPROVAL:
            self.bus.emit(clock, "approval_pending", {
                "action_id": action.id, "service": proposal.service,
                "kind": proposal.kind.value,
                "deadline_ts": action.approval.deadline_ts})

    def _snapshot(self, service: str) -> ServiceSnapshot:
        rt = self.state.services[service]
        healthy = [r for r in rt.replicas if r.healthy]
        mean_mult = (sum(r.capacity_multiplier for r in healthy) / len(healthy)
                     if healthy else 1.0)
        return ServiceSnapshot(
            service=service,
            desired_replicas=rt.desired_replicas,
            available_replicas=rt.available_replicas,
            drifted=rt.drifted,
            offered_rps=rt.offered_rps,
            capacity_rps_per_replica=rt.spec.capacity_rps_per_replica,
            mean_capacity_multiplier=mean_mult,
            min_replicas=rt.spec.min_replicas,
            max_replicas=rt.spec.max_replicas,
            utilization=rt.utilization,
        )

    def _scan_policy_violations(self, clock: int) -> None:
        for rule in self.config.policies.rules:
            for service, rt in self.state.services.items():
                hit = None
                if rule.kind == "drift_forbidden" and rt.drifted:
                    hit = "config drift active"
                elif rule.kind == "replica_bounds":
                    if not rule.params["min"] <= rt.desired_replicas <= rule.params["max"]:
                        hit = f"replicas {rt.desired_replicas} outside bounds"
                if hit is not None:
                    v = ViolationRecord(ts_s=clock, rule_id=rule.id,
                                        service=service, detail=hit)
                    self.violations.append(v)
                    self.bus.emit(clock, "violation", {
                        "rule_id": rule.id, "service": service,
                        "detail": hit})
