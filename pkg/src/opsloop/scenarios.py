"""Built-in evaluation scenarios S1-S4: workload pattern x SLO strictness,
with a shared default service topology and fault schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import control
from .control import default_policy_set
from .evalstats import FAULTS_PER_TRIAL, TrialConfig
from .simcluster import FaultEvent, FaultKind, ServiceSpec, WorkloadProfile
from .telemetry import SLO_PRESETS

DURATION_S = 5400
WARMUP_S = 600

# Batch A/B comparisons emulate unattended operation: overdue high-risk
# approvals are auto-approved after a short hold instead of denied.
BATCH_APPROVAL_TIMEOUT_S = 30
BATCH_TIMEOUT_DECISION = "approve"


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    workload_pattern: str  # steady | bursty
    slo_strictness: str    # standard | strict | relaxed
    trace_type: str        # synthetic | recorded


SCENARIOS = {
    "S1": ScenarioSpec("S1", "steady", "standard", "recorded"),
    "S2": ScenarioSpec("S2", "bursty", "standard", "synthetic"),
    "S3": ScenarioSpec("S3", "steady", "strict", "recorded"),
    "S4": ScenarioSpec("S4", "bursty", "relaxed", "synthetic"),
}


def default_service() -> ServiceSpec:
    return ServiceSpec(
        name="web", desired_replicas=10, capacity_rps_per_replica=50.0,
        vcpu_per_replica=1.0, base_latency_ms=40.0, min_replicas=2,
        max_replicas=16, idle_cpu_fraction=0.15)


def default_workload(pattern: str, trace_type: str,
                     seed: int = 0) -> WorkloadProfile:
    if pattern == "bursty":
        # Trough 100 rps / burst 260 rps; warm-up spans one full cycle so the
        # detector trains on both phases.
        return WorkloadProfile(kind="bursty", base_rps=100.0, amplitude=160.0,
                               period_s=600.0)
    if trace_type == "recorded":
        # Replay of a previously captured steady trace with mild plateaus.
        rng = np.random.default_rng(1000 + seed)
        segments = []
        t = 0
        while t < DURATION_S:
            length = int(rng.integers(300, 600))
            rps = float(rng.uniform(150.0, 190.0))
            segments.append((t, min(t + length, DURATION_S), round(rps, 1)))
            t += length
        return WorkloadProfile(kind="spike-script", base_rps=170.0,
                               script=tuple(segments))
    return WorkloadProfile(kind="steady", base_rps=170.0)


def default_fault_schedule(service: str = "web",
                           n_faults: int = FAULTS_PER_TRIAL,
                           duration_s: int = DURATION_S,
                           warmup_s: int = WARMUP_S) -> list:
    """Evenly spaced post-warm-up faults, kinds round-robin."""
    kinds = [FaultKind.CPU_SATURATION, FaultKind.POD_EVICTION,
             FaultKind.CONFIG_DRIFT]
    magnitudes = {FaultKind.CPU_SATURATION: 0.2,
                  FaultKind.POD_EVICTION: 8,
                  FaultKind.CONFIG_DRIFT: 2}
    span = duration_s - warmup_s
    faults = []
    for i in range(n_faults):
        at = warmup_s + (i + 1) * span // (n_faults + 1)
        kind = kinds[i % len(kinds)]
        faults.append(FaultEvent(kind=kind, target_service=service,
                                 at_s=int(at), magnitude=magnitudes[kind],
                                 duration_s=None))
    return faults


def build_trial_config(scenario: ScenarioSpec, mode: str, seed: int,
                       batch: bool = True,
                       overrides: dict | None = None) -> TrialConfig:
    service = default_service()
    overrides = overrides or {}
    config = TrialConfig(
        scenario_id=scenario.id,
        mode=mode,
        seed=seed,
        services=[service],
        workload=default_workload(scenario.workload_pattern,
                                  scenario.trace_type),
        fault_schedule=default_fault_schedule(service.name),
        slo=SLO_PRESETS[scenario.slo_strictness],
        policies=default_policy_set(service.min_replicas,
                                    service.max_replicas),
        duration_s=DURATION_S,
        warmup_s=WARMUP_S,
        approval_timeout_s=(BATCH_APPROVAL_TIMEOUT_S if batch
                            else control.APPROVAL_TIMEOUT_S_DEFAULT),
        timeout_decision=(BATCH_TIMEOUT_DECISION if batch
                          else control.TIMEOUT_DECISION_DEFAULT),
    )
    for key, value in overrides.items():
        if not hasattr(config, key):
            raise KeyError(key)
        setattr(config, key, value)
    return config


def scenario_suite(k: int = 5, base_seed: int = 42,
                   bootstrap_b: int | None = None) -> dict:
    """One ComparisonReport per scenario S1-S4."""
    from .evalstats import BOOTSTRAP_B_DEFAULT, run_comparison
    reports = {}
    for sid in sorted(SCENARIOS):
        reports[sid] = run_comparison(
            scenario_config_factory(sid), k=k, base_seed=base_seed,
            scenario_id=sid,
            bootstrap_b=bootstrap_b or BOOTSTRAP_B_DEFAULT)
    return reports


def scenario_config_factory(scenario_id: str, batch: bool = True,
                            overrides: dict | None = None):
    """make_config(mode, seed) callable for run_comparison."""
    scenario = SCENARIOS[scenario_id]

    def make_config(mode: str, seed: int) -> TrialConfig:
        return build_trial_config(scenario, mode, seed, batch=batch,
                                  overrides=overrides)

    return make_config
