"""Deterministic discrete-event cluster simulator.

Models a small set of services under scripted load with injectable faults
(CPU saturation, pod eviction, configuration drift).  All randomness comes
from a seeded generator owned by the cluster instance, so a (config, seed)
pair reproduces the exact same trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

TICK_S = 1
SCRAPE_INTERVAL_S = 30
LATENCY_CAP_MS = 10_000.0
RHO_CEILING = 0.98
RESTART_DELAY_S = 15
NOISE_SIGMA = 0.03
MEM_MB_PER_REPLICA = 512.0


class SimError(Exception):
    """Invalid configuration or action against the simulated cluster."""


class FaultKind(str, Enum):
    CPU_SATURATION = "cpu_saturation"
    POD_EVICTION = "pod_eviction"
    CONFIG_DRIFT = "config_drift"


class ActionKind(str, Enum):
    SCALE_UP = "scale_up"
    SCALE_DOWN = "scale_down"
    RESTART_POD = "restart_pod"
    ROLLBACK_CONFIG = "rollback_config"


@dataclass(frozen=True)
class ServiceSpec:
    name: str
    desired_replicas: int
    capacity_rps_per_replica: float
    vcpu_per_replica: float = 1.0
    base_latency_ms: float = 40.0
    min_replicas: int = 1
    max_replicas: int = 16
    idle_cpu_fraction: float = 0.0

    def validate(self) -> None:
        if self.min_replicas < 1:
            raise SimError(f"{self.name}: min_replicas must be >= 1")
        if self.desired_replicas < self.min_replicas:
            raise SimError(f"{self.name}: desired_replicas below min")
        if self.desired_replicas > self.max_replicas:
            raise SimError(f"{self.name}: desired_replicas above max")
        if self.capacity_rps_per_replica <= 0:
            raise SimError(f"{self.name}: capacity_rps_per_replica must be > 0")
        if self.base_latency_ms <= 0:
            raise SimError(f"{self.name}: base_latency_ms must be > 0")
        if not 0.0 <= self.idle_cpu_fraction < 1.0:
            raise SimError(f"{self.name}: idle_cpu_fraction must be in [0, 1)")


@dataclass
class ReplicaState:
    id: str
    healthy: bool = True
    cpu_fraction: float = 0.0
    capacity_multiplier: float = 1.0
    # When set, the replica is restarting and becomes healthy at this clock.
    restarting_until_s: Optional[int] = None


@dataclass(frozen=True)
class WorkloadProfile:
    kind: str = "steady"  # steady | bursty | spike-script
    base_rps: float = 100.0
    amplitude: float = 0.0
    period_s: float = 1200.0
    # spike-script: list of (start_s, end_s, rps), non-overlapping, ordered.
    script: tuple = ()

    def validate(self) -> None:
        if self.base_rps < 0:
            raise SimError("base_rps must be >= 0")
        if self.kind not in ("steady", "bursty", "spike-script"):
            raise SimError(f"unknown workload kind {self.kind!r}")
        if self.kind == "spike-script":
            prev_end = -math.inf
            for start, end, _rps in self.script:
                if start < prev_end or end <= start:
                    raise SimError("spike-script segments must be ordered and non-overlapping")
                prev_end = end

    def offered_rps(self, t_s: float) -> float:
        if self.kind == "steady":
            return self.base_rps
        if self.kind == "bursty":
            # Square wave: burst for the first half period, trough for the rest.
            phase = t_s % self.period_s
            if phase < self.period_s / 2.0:
                return self.base_rps + self.amplitude
            return self.base_rps
        for start, end, rps in self.script:
            if start <= t_s < end:
                return rps
        return self.base_rps


@dataclass
class FaultEvent:
    kind: FaultKind
    target_service: str
    at_s: int
    magnitude: float
    duration_s: Optional[int] = None

    def validate(self) -> None:
        if self.at_s < 0:
            raise SimError("fault at_s must be >= 0")
        if self.kind == FaultKind.CPU_SATURATION and not 0.0 < self.magnitude < 1.0:
            raise SimError("cpu_saturation magnitude must be in (0,1)")
        if self.kind == FaultKind.POD_EVICTION and self.magnitude < 1:
            raise SimError("pod_eviction count must be >= 1")
        if self.kind == FaultKind.CONFIG_DRIFT and self.magnitude < 0:
            raise SimError("config_drift replica value must be >= 0")


@dataclass
class ServiceRuntime:
    """Live state of one service: spec, replicas, drift and load metrics."""

    spec: ServiceSpec
    replicas: list = field(default_factory=list)
    desired_replicas: int = 0
    drifted: bool = False
    drift_value: Optional[int] = None
    pre_drift_desired: Optional[int] = None
    clamp_flag: bool = False
    # Metrics refreshed on each step.
    offered_rps: float = 0.0
    served_rps: float = 0.0
    dropped_rps: float = 0.0
    utilization: float = 0.0
    p95_latency_ms: float = 0.0
    error_rate: float = 0.0
    cpu_vcpu: float = 0.0
    mem_mb: float = 0.0
    _next_replica_id: int = 0

    def new_replica(self, healthy: bool = True) -> ReplicaState:
        rid = f"{self.spec.name}-{self._next_replica_id}"
        self._next_replica_id += 1
        return ReplicaState(id=rid, healthy=healthy)

    @property
    def available_replicas(self) -> int:
        return sum(1 for r in self.replicas if r.healthy)


@dataclass
class InjectionMarker:
    """Ground-truth record of a fault application, used for incident pairing."""

    service: str
    kind: FaultKind
    t_s: int
    magnitude: float


class ClusterState:
    """Whole simulated world: services, fault schedule, seeded noise, clock."""

    def __init__(self, services: list, workload: WorkloadProfile,
                 fault_schedule: list, seed: int,
                 noise_sigma: float = NOISE_SIGMA):
        self.clock_s = 0
        self.noise_sigma = noise_sigma
        self.workload = workload
        self.services: dict[str, ServiceRuntime] = {}
        for spec in services:
            spec.validate()
            rt = ServiceRuntime(spec=spec, desired_replicas=spec.desired_replicas)
            rt.replicas = [rt.new_replica() for _ in range(spec.desired_replicas)]
            self.services[spec.name] = rt
        workload.validate()
        for fault in fault_schedule:
            fault.validate()
            if fault.target_service not in self.services:
                raise SimError(f"fault targets unknown service {fault.target_service!r}")
        self.pending_faults = sorted(fault_schedule, key=lambda f: f.at_s)
        self.active_faults: list[FaultEvent] = []
        self.injections: list[InjectionMarker] = []
        self.rng = np.random.default_rng(seed)
        self._refresh_all(noisy=False)

    # ---- stepping ----------------------------------------------------------

    def step(self, dt_s: int = TICK_S) -> None:
        if dt_s <= 0:
            raise SimError("dt_s must be > 0")
        new_clock = self.clock_s + dt_s
        while self.pending_faults and self.pending_faults[0].at_s <= new_clock:
            fault = self.pending_faults.pop(0)
            self._apply_fault(fault, at_s=max(fault.at_s, self.clock_s))
        self.clock_s = new_clock
        self._expire_faults()
        self._complete_restarts()
        self._reconcile_replicas()
        self._refresh_all(noisy=True)

    def inject_fault(self, fault: FaultEvent) -> InjectionMarker:
        """Apply a fault immediately (at_s overridden to the current clock)."""
        fault.validate()
        if fault.target_service not in self.services:
            raise SimError(f"unknown service {fault.target_service!r}")
        fault = replace(fault) if isinstance(fault, FaultEvent) else fault
        fault.at_s = self.clock_s
        marker = self._apply_fault(fault, at_s=self.clock_s)
        self._refresh_all(noisy=False)
        return marker

    def _apply_fault(self, fault: FaultEvent, at_s: int) -> InjectionMarker:
        rt = self.services[fault.target_service]
        if fault.kind == FaultKind.CPU_SATURATION:
            for r in rt.replicas:
                if r.healthy:
                    r.capacity_multiplier = min(r.capacity_multiplier, fault.magnitude)
            if fault.duration_s is not None:
                self.active_faults.append(fault)
        elif fault.kind == FaultKind.POD_EVICTION:
            count = int(fault.magnitude)
            for r in rt.replicas:
                if count <= 0:
                    break
                if r.healthy:
                    r.healthy = False
                    r.restarting_until_s = None
                    count -= 1
        elif fault.kind == FaultKind.CONFIG_DRIFT:
            drift_value = int(fault.magnitude)
            if not rt.drifted:
                rt.pre_drift_desired = rt.desired_replicas
            rt.drifted = True
            rt.drift_value = drift_value
            rt.desired_replicas = drift_value
        marker = InjectionMarker(service=fault.target_service, kind=fault.kind,
                                 t_s=at_s, magnitude=fault.magnitude)
        self.injections.append(marker)
        return marker

    def _expire_faults(self) -> None:
        still_active = []
        for fault in self.active_faults:
            if fault.duration_s is not None and self.clock_s >= fault.at_s + fault.duration_s:
                rt = self.services[fault.target_service]
                for r in rt.replicas:
                    r.capacity_multiplier = 1.0
            else:
                still_active.append(fault)
        self.active_faults = still_active

    def _complete_restarts(self) -> None:
        for rt in self.services.values():
            for r in rt.replicas:
                if r.restarting_until_s is not None and self.clock_s >= r.restarting_until_s:
                    r.healthy = True
                    r.capacity_multiplier = 1.0
                    r.restarting_until_s = None

    def _reconcile_replicas(self) -> None:
        """Converge each replica list toward desired_replicas.

        Scale-down removes unhealthy replicas first.  Scale-up adds fresh
        healthy replicas (pod start cost is modeled only for restarts).
        """
        for rt in self.services.values():
            while len(rt.replicas) > rt.desired_replicas:
                unhealthy = [r for r in rt.replicas if not r.healthy]
                victim = unhealthy[0] if unhealthy else rt.replicas[-1]
                rt.replicas.remove(victim)
            while len(rt.replicas) < rt.desired_replicas:
                rt.replicas.append(rt.new_replica())

    # ---- actions -----------------------------------------------------------

    def apply_action(self, kind: ActionKind, service: str,
                     amount: int = 0) -> dict:
        if service not in self.services:
            raise SimError(f"unknown service {service!r}")
        rt = self.services[service]
        spec = rt.spec
        result = {"kind": kind.value, "service": service, "clamped": False,
                  "noop": False}
        if kind in (ActionKind.SCALE_UP, ActionKind.SCALE_DOWN):
            delta = amount if kind == ActionKind.SCALE_UP else -abs(amount)
            target = rt.desired_replicas + delta
            clamped = min(max(target, spec.min_replicas), spec.max_replicas)
            if clamped != target:
                result["clamped"] = True
                rt.clamp_flag = True
            rt.desired_replicas = clamped
            if rt.drifted:
                # Scaling while drifted re-declares intent at the new value.
                rt.pre_drift_desired = clamped
        elif kind == ActionKind.RESTART_POD:
            restarted = 0
            for r in rt.replicas:
                needs_restart = (not r.healthy and r.restarting_until_s is None) \
                    or (r.healthy and r.capacity_multiplier < 1.0)
                if needs_restart:
                    r.healthy = False
                    r.capacity_multiplier = 1.0
                    r.restarting_until_s = self.clock_s + RESTART_DELAY_S
                    restarted += 1
            result["restarted"] = restarted
            result["noop"] = restarted == 0
        elif kind == ActionKind.ROLLBACK_CONFIG:
            if rt.drifted:
                rt.desired_replicas = rt.pre_drift_desired \
                    if rt.pre_drift_desired is not None else spec.desired_replicas
                rt.drifted = False
                rt.drift_value = None
                rt.pre_drift_desired = None
            else:
                result["noop"] = True
        self._reconcile_replicas()
        self._refresh_all(noisy=False)
        return result

    # ---- performance model -------------------------------------------------

    def _refresh_all(self, noisy: bool) -> None:
        # Fixed service order keeps the noise stream deterministic.
        for name in self.services:
            self._refresh_service(self.services[name], noisy)

    def _refresh_service(self, rt: ServiceRuntime, noisy: bool) -> None:
        spec = rt.spec
        offered = self.workload.offered_rps(self.clock_s)
        noise_rps = noise_lat = 1.0
        if noisy and self.noise_sigma > 0:
            noise_rps = max(0.0, 1.0 + self.noise_sigma * self.rng.standard_normal())
            noise_lat = max(0.0, 1.0 + self.noise_sigma * self.rng.standard_normal())
        offered *= noise_rps
        healthy = [r for r in rt.replicas if r.healthy]
        if healthy:
            mean_mult = sum(r.capacity_multiplier for r in healthy) / len(healthy)
            capacity = len(healthy) * spec.capacity_rps_per_replica * mean_mult
        else:
            capacity = 0.0
        if capacity > 0:
            rho = offered / capacity
        else:
            rho = math.inf if offered > 0 else 0.0
        if math.isinf(rho):
            p95 = LATENCY_CAP_MS
            err = 1.0
        else:
            p95 = spec.base_latency_ms / max(1e-9, 1.0 - min(rho, RHO_CEILING))
            p95 = min(p95 * noise_lat, LATENCY_CAP_MS)
            err = min(max(rho - 1.0, 0.0), 1.0)
        dropped = offered * err
        idle = spec.idle_cpu_fraction
        frac = min(1.0, idle + (1.0 - idle) * min(rho, 1.0))
        for r in rt.replicas:
            r.cpu_fraction = frac if r.healthy else 0.0
        rt.offered_rps = offered
        rt.served_rps = offered - dropped
        rt.dropped_rps = dropped
        rt.utilization = min(rho, 1e9)
        rt.p95_latency_ms = p95
        rt.error_rate = err
        rt.cpu_vcpu = sum(r.cpu_fraction * spec.vcpu_per_replica for r in rt.replicas)
        rt.mem_mb = len(rt.replicas) * MEM_MB_PER_REPLICA

    # ---- reads -------------------------------------------------------------

    def snapshot_metrics(self) -> dict:
        """Per-service raw metric tuple; a pure read of the latest step."""
        out = {}
        for name, rt in self.services.items():
            out[name] = {
                "cpu_vcpu": rt.cpu_vcpu,
                "mem": rt.mem_mb,
                "rps": rt.served_rps,
                "p95_latency_ms": rt.p95_latency_ms,
                "error_rate": rt.error_rate,
                "desired_replicas": float(rt.desired_replicas),
                "available_replicas": float(rt.available_replicas),
            }
        return out

    def summary(self) -> dict:
        """JSON-friendly view of the world for the API."""
        return {
            "clock_s": self.clock_s,
            "services": {
                name: {
                    "desired_replicas": rt.desired_replicas,
                    "available_replicas": rt.available_replicas,
                    "drifted": rt.drifted,
                    "offered_rps": round(rt.offered_rps, 3),
                    "served_rps": round(rt.served_rps, 3),
                    "p95_latency_ms": round(rt.p95_latency_ms, 3),
                    "error_rate": round(rt.error_rate, 5),
                    "cpu_vcpu": round(rt.cpu_vcpu, 3),
                    "utilization": round(rt.utilization, 4),
                    "mean_capacity_multiplier": round(
                        sum(r.capacity_multiplier for r in rt.replicas if r.healthy)
                        / max(1, rt.available_replicas), 4),
                }
                for name, rt in self.services.items()
            },
            "active_faults": len(self.active_faults),
        }


def init_cluster(services: list, workload: WorkloadProfile,
                 fault_schedule: list, seed: int,
                 noise_sigma: float = NOISE_SIGMA) -> ClusterState:
    """Build a cluster at clock 0 with every service at desired health."""
    return ClusterState(services, workload, fault_schedule, seed,
                        noise_sigma=noise_sigma)
