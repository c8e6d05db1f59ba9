"""Measurement methodology: per-incident and mean MTTR, resource efficiency
over matched SLO-satisfying windows, relative-improvement deltas, bootstrap
confidence intervals, the Mann-Whitney U test, Cliff's delta, and the
trial / A-B comparison / scenario-suite runners."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from . import control
from .control import PolicySet
from .engine import Engine, EngineConfig, MODE_BASELINE, MODE_CPE
from .simcluster import FaultEvent, WorkloadProfile
from .telemetry import SloSpec, SloVerdict

BOOTSTRAP_B_DEFAULT = 10_000
MWU_EXACT_LIMIT = 400
TRIALS_DEFAULT = 5
FAULTS_PER_TRIAL = 8


class StatsError(Exception):
    pass


# ---- core statistics -------------------------------------------------------

def mttr_per_incident(incident) -> float:
    if incident.t_detected_s is None or incident.t_recovered_s is None:
        raise StatsError(f"incident {incident.id} is unresolved")
    return float(incident.t_recovered_s - incident.t_detected_s)


def mean_mttr(incidents) -> float:
    values = [mttr_per_incident(i) for i in incidents]
    if not values:
        raise StatsError("no resolved incidents")
    return float(np.mean(values))


def delta_mttr(baseline_mean: float, cpe_mean: float) -> float:
    """Relative MTTR improvement in percent (positive = cpe faster)."""
    if baseline_mean <= 0:
        raise StatsError("baseline mean MTTR must be > 0")
    return (baseline_mean - cpe_mean) / baseline_mean * 100.0


def delta_re(baseline_re: float, cpe_re: float) -> float:
    """Relative resource-efficiency improvement in percent."""
    if baseline_re <= 0:
        raise StatsError("baseline RE must be > 0")
    return (cpe_re - baseline_re) / baseline_re * 100.0


def resource_efficiency(rps_points: list, cpu_points: list) -> float:
    """Time-mean served RPS over time-mean consumed vCPU."""
    if not rps_points or not cpu_points:
        raise StatsError("empty window")
    mean_cpu = float(np.mean([v for _, v in cpu_points]))
    if mean_cpu <= 0:
        raise StatsError("zero cpu in window")
    mean_rps = float(np.mean([v for _, v in rps_points]))
    return mean_rps / mean_cpu


def bootstrap_ci(values, b: int = BOOTSTRAP_B_DEFAULT, level: float = 0.95,
                 seed: int = 0, statistic=np.mean) -> tuple:
    """Seeded percentile CI of the statistic under resampling w/ replacement."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise StatsError("bootstrap over empty sample")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.size, size=(b, values.size))
    stats = statistic(values[idx], axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(stats, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def _u_statistic(a, b) -> float:
    """U for sample a: wins over b plus half ties."""
    u = 0.0
    for x in a:
        for y in b:
            if x > y:
                u += 1.0
            elif x == y:
                u += 0.5
    return u


def _exact_u_sf(n: int, m: int, u_threshold: float) -> float:
    """P(U >= u_threshold) under H0 with no ties, by DP enumeration.

    count[u] = number of arrangements of n 'a' ranks among n+m giving U=u.
    """
    # Classic recurrence on the distribution of U.
    max_u = n * m
    prev = {0: 1}
    # f(n, m, u) = f(n-1, m, u-m) + f(n, m-1, u)
    table = [[None] * (m + 1) for _ in range(n + 1)]

    def f(ni, mi):
        if table[ni][mi] is not None:
            return table[ni][mi]
        if ni == 0 or mi == 0:
            counts = np.zeros(max_u + 1, dtype=float)
            counts[0] = 1.0
        else:
            a_side = f(ni - 1, mi)
            b_side = f(ni, mi - 1)
            counts = np.zeros(max_u + 1, dtype=float)
            counts[mi:] += a_side[:max_u + 1 - mi]
            counts += b_side
        table[ni][mi] = counts
        return counts

    counts = f(n, m)
    total = counts.sum()
    u_int = math.ceil(u_threshold - 1e-12)
    return float(counts[u_int:].sum() / total)


def mann_whitney_u(sample_a, sample_b) -> tuple:
    """Two-sided Mann-Whitney U test.

    Exact enumeration when n*m <= MWU_EXACT_LIMIT and there are no ties;
    otherwise the normal approximation with tie and continuity corrections.
    Returns (U_a, p_two_sided).
    """
    a = list(map(float, sample_a))
    b = list(map(float, sample_b))
    if not a or not b:
        raise StatsError("both samples must be non-empty")
    n, m = len(a), len(b)
    u_a = _u_statistic(a, b)
    u_b = n * m - u_a
    has_ties = len(set(a) | set(b)) < len(a) + len(b)
    u_max = max(u_a, u_b)
    if n * m <= MWU_EXACT_LIMIT and not has_ties:
        p = 2.0 * _exact_u_sf(n, m, u_max)
        return u_a, min(1.0, p)
    # Normal approximation.
    mu = n * m / 2.0
    pooled = sorted(a + b)
    tie_sizes = [len(list(g)) for _, g in itertools.groupby(pooled)]
    nm = n + m
    tie_term = sum(t ** 3 - t for t in tie_sizes) / (nm * (nm - 1)) if nm > 1 else 0.0
    var = n * m / 12.0 * ((nm + 1) - tie_term)
    if var <= 0:
        return u_a, 1.0
    z = (u_max - mu - 0.5) / math.sqrt(var)  # continuity correction
    if z <= 0:
        return u_a, 1.0
    p = 2.0 * 0.5 * math.erfc(z / math.sqrt(2.0))
    return u_a, min(1.0, p)


def cliffs_delta(sample_a, sample_b) -> float:
    """(#(a>b) - #(a<b)) / (n*m), in [-1, 1]."""
    a = list(sample_a)
    b = list(sample_b)
    if not a or not b:
        raise StatsError("both samples must be non-empty")
    gt = sum(1 for x in a for y in b if x > y)
    lt = sum(1 for x in a for y in b if x < y)
    return (gt - lt) / (len(a) * len(b))


# ---- trials ----------------------------------------------------------------

@dataclass
class TrialConfig:
    scenario_id: str
    mode: str
    seed: int
    services: list
    workload: WorkloadProfile
    fault_schedule: list
    slo: SloSpec
    policies: PolicySet
    duration_s: int = 5400
    warmup_s: int = 600
    anomaly_threshold: float = 0.60
    approval_timeout_s: int = control.APPROVAL_TIMEOUT_S_DEFAULT
    timeout_decision: str = control.TIMEOUT_DECISION_DEFAULT
    noise_sigma: float = 0.03
    triage_median_s: float = control.TRIAGE_MEDIAN_S

    def validate(self) -> None:
        if self.duration_s <= self.warmup_s:
            raise StatsError("duration_s must exceed warmup_s")
        for spec in self.services:
            spec.validate()

    def digest(self) -> str:
        blob = json.dumps(self._digest_doc(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def _digest_doc(self) -> dict:
        return {
            "scenario_id": self.scenario_id, "mode": self.mode,
            "seed": self.seed,
            "services": [asdict(s) for s in self.services],
            "workload": asdict(self.workload),
            "faults": [{"kind": f.kind.value, "service": f.target_service,
                        "at_s": f.at_s, "magnitude": f.magnitude,
                        "duration_s": f.duration_s}
                       for f in self.fault_schedule],
            "slo": asdict(self.slo),
            "duration_s": self.duration_s, "warmup_s": self.warmup_s,
            "anomaly_threshold": self.anomaly_threshold,
            "approval_timeout_s": self.approval_timeout_s,
            "timeout_decision": self.timeout_decision,
            "noise_sigma": self.noise_sigma,
            "triage_median_s": self.triage_median_s,
        }


@dataclass
class TrialResult:
    scenario_id: str
    mode: str
    seed: int
    config_digest: str
    incidents: list
    mttr_values_s: list
    mean_mttr_s: Optional[float]
    unresolved_incidents: int
    re_cpu: Optional[float]
    re_mem: Optional[float]
    violations_per_hr: float
    violation_findings: int
    autonomy_pct: Optional[float]
    slo_compliance_fraction: float
    detector_summary: dict
    compliant_scrapes: list  # measured-window scrape ts where SLO held

    def to_doc(self) -> dict:
        doc = {
            "scenario_id": self.scenario_id,
            "mode": self.mode,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "incidents": [
                {"id": i.id, "service": i.service, "fault_kind": i.fault_kind,
                 "t_injected_s": i.t_injected_s,
                 "t_detected_s": i.t_detected_s,
                 "t_recovered_s": i.t_recovered_s,
                 "detector": i.detector}
                for i in self.incidents],
            "mttr_values_s": self.mttr_values_s,
            "mean_mttr_s": self.mean_mttr_s,
            "unresolved_incidents": self.unresolved_incidents,
            "re_cpu": self.re_cpu,
            "re_mem": self.re_mem,
            "violations_per_hr": self.violations_per_hr,
            "violation_findings": self.violation_findings,
            "autonomy_pct": self.autonomy_pct,
            "slo_compliance_fraction": self.slo_compliance_fraction,
            "detector": self.detector_summary,
        }
        return doc

    def to_json(self) -> str:
        return canonical_json(self.to_doc())


def canonical_json(doc) -> str:
    """Key-sorted, compact, newline-terminated serialization."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"),
                      allow_nan=False) + "\n"


def run_trial(config: TrialConfig,
              return_engine: bool = False):
    """Execute one full trial and compute every per-trial metric."""
    config.validate()
    engine_config = EngineConfig(
        mode=config.mode, services=config.services, workload=config.workload,
        fault_schedule=[FaultEvent(f.kind, f.target_service, f.at_s,
                                   f.magnitude, f.duration_s)
                        for f in config.fault_schedule],
        slo=config.slo, policies=config.policies,
        duration_s=config.duration_s, warmup_s=config.warmup_s,
        anomaly_threshold=config.anomaly_threshold,
        approval_timeout_s=config.approval_timeout_s,
        timeout_decision=config.timeout_decision,
        noise_sigma=config.noise_sigma,
        triage_median_s=config.triage_median_s)
    engine = Engine(engine_config, seed=config.seed)
    engine.run()

    warmup = config.warmup_s
    measured = [i for i in engine.incidents.incidents
                if i.t_injected_s >= warmup]
    resolved = [i for i in measured if i.t_recovered_s is not None
                and i.t_detected_s is not None]
    mttrs = [mttr_per_incident(i) for i in resolved]
    mean = float(np.mean(mttrs)) if mttrs else None

    # SLO compliance and per-scrape verdicts over the measured window.
    verdicts = [(ts, svc, v) for ts, svc, v in engine.scrape_verdicts
                if ts > warmup]
    compliant_ts = sorted({ts for ts, _svc, v in verdicts
                           if v == SloVerdict.COMPLIANT.value})
    per_scrape: dict = {}
    for ts, _svc, v in verdicts:
        per_scrape.setdefault(ts, []).append(v)
    all_ts = sorted(per_scrape)
    compliant_all = [ts for ts in all_ts
                     if all(v == SloVerdict.COMPLIANT.value
                            for v in per_scrape[ts])]
    compliance = len(compliant_all) / len(all_ts) if all_ts else 0.0

    violations = control.count_violations(engine.violations, warmup + 1,
                                          config.duration_s)
    findings = sum(1 for v in engine.violations if v.ts_s > warmup)
    autonomy = control.autonomy_rate(engine.gate.actions)

    re_cpu, re_mem = _trial_re(engine, compliant_all)

    result = TrialResult(
        scenario_id=config.scenario_id, mode=config.mode, seed=config.seed,
        config_digest=config.digest(),
        incidents=measured, mttr_values_s=mttrs, mean_mttr_s=mean,
        unresolved_incidents=len(measured) - len(resolved),
        re_cpu=re_cpu, re_mem=re_mem,
        violations_per_hr=violations, violation_findings=findings,
        autonomy_pct=autonomy, slo_compliance_fraction=compliance,
        detector_summary=(engine.model.summary() if engine.model else
                          {"n_trees": 0, "subsample": 0,
                           "c_psi": 0.0}),
        compliant_scrapes=compliant_all,
    )
    if return_engine:
        return result, engine
    return result


def _trial_re(engine: Engine, scrape_ts: list):
    """RE over the given scrape timestamps, pooled across services."""
    if not scrape_ts:
        return None, None
    ts_set = set(scrape_ts)
    rps_points, cpu_points, mem_points = [], [], []
    for service in engine.state.services:
        labels = {"service": service, "mode": engine.mode}
        for metric, sink in (("rps", rps_points), ("cpu_vcpu", cpu_points),
                             ("mem", mem_points)):
            pts = engine.store.query_window(metric, labels, 0, engine.state.clock_s)
            sink.extend((ts, v) for ts, v in pts if ts in ts_set)
    try:
        re_cpu = resource_efficiency(rps_points, cpu_points)
        re_mem = resource_efficiency(rps_points, mem_points)
    except StatsError:
        return None, None
    return re_cpu, re_mem


# ---- comparisons -----------------------------------------------------------

@dataclass
class ComparisonReport:
    scenario_id: str
    trials_per_arm: int
    base_seed: int
    baseline: list  # TrialResult docs
    cpe: list
    paired_incidents: int
    mean_mttr_baseline_s: float
    mean_mttr_cpe_s: float
    delta_mttr_pct: float
    mttr_ci_pct: tuple
    re_baseline: float
    re_cpe: float
    delta_re_pct: float
    re_ci_pct: tuple
    violations_baseline_per_hr: float
    violations_cpe_per_hr: float
    delta_violations_pct: float
    mwu_u: float
    mwu_p: float
    cliffs_delta: float
    autonomy_baseline_pct: Optional[float]
    autonomy_cpe_pct: Optional[float]

    def to_doc(self) -> dict:
        doc = asdict(self)
        doc["baseline"] = [t.to_doc() if isinstance(t, TrialResult) else t
                           for t in self.baseline]
        doc["cpe"] = [t.to_doc() if isinstance(t, TrialResult) else t
                      for t in self.cpe]
        doc["mttr_ci_pct"] = list(self.mttr_ci_pct)
        doc["re_ci_pct"] = list(self.re_ci_pct)
        # Eq. 3 is reported as RPS per vCPU (higher is better); the summary
        # table's inverted row label is intentionally not reproduced.
        doc["re_definition"] = "rps_per_vcpu"
        return doc

    def to_json(self) -> str:
        return canonical_json(self.to_doc())


def matched_re(result_a: TrialResult, result_b: TrialResult,
               engines: tuple) -> tuple:
    """RE per arm over scrapes at which BOTH arms were SLO-compliant."""
    matched = sorted(set(result_a.compliant_scrapes)
                     & set(result_b.compliant_scrapes))
    engine_a, engine_b = engines
    re_a = _trial_re(engine_a, matched)
    re_b = _trial_re(engine_b, matched)
    return re_a, re_b


def run_comparison(make_config, k: int = TRIALS_DEFAULT, base_seed: int = 42,
                   scenario_id: str = "custom",
                   arm_modes=(MODE_BASELINE, MODE_CPE),
                   bootstrap_b: int = BOOTSTRAP_B_DEFAULT) -> ComparisonReport:
    """Run K seeded arm pairs and compute the full statistical report.

    make_config(mode, seed) -> TrialConfig; each pair shares one seed so the
    two arms face identical load, fault and noise streams.
    """
    if k < 1:
        raise StatsError("k must be >= 1")
    arm_a_results, arm_b_results = [], []
    re_a_parts, re_b_parts = [], []
    for trial in range(k):
        seed = base_seed + trial
        cfg_a = make_config(arm_modes[0], seed)
        cfg_b = make_config(arm_modes[1], seed)
        res_a, eng_a = run_trial(cfg_a, return_engine=True)
        res_b, eng_b = run_trial(cfg_b, return_engine=True)
        arm_a_results.append(res_a)
        arm_b_results.append(res_b)
        (ra_cpu, _ra_mem), (rb_cpu, _rb_mem) = matched_re(
            res_a, res_b, (eng_a, eng_b))
        if ra_cpu is not None and rb_cpu is not None:
            re_a_parts.append(ra_cpu)
            re_b_parts.append(rb_cpu)

    pooled_a = [m for r in arm_a_results for m in r.mttr_values_s]
    pooled_b = [m for r in arm_b_results for m in r.mttr_values_s]
    if not pooled_a or not pooled_b:
        raise StatsError("an arm has zero resolved incidents")
    paired = _paired_incident_count(arm_a_results, arm_b_results)

    mean_a = float(np.mean(pooled_a))
    mean_b = float(np.mean(pooled_b))
    d_mttr = delta_mttr(mean_a, mean_b)
    mttr_ci = _delta_ci(pooled_a, pooled_b, delta_mttr, seed=base_seed,
                        b=bootstrap_b)

    if not re_a_parts:
        raise StatsError("no matched SLO-satisfying windows")
    re_a = float(np.mean(re_a_parts))
    re_b = float(np.mean(re_b_parts))
    d_re = delta_re(re_a, re_b)
    if len(re_a_parts) > 1:
        re_ci = _delta_ci(re_a_parts, re_b_parts, delta_re,
                          seed=base_seed + 1, b=bootstrap_b, paired=True)
    else:
        re_ci = (d_re, d_re)

    viol_a = float(np.mean([r.violations_per_hr for r in arm_a_results]))
    viol_b = float(np.mean([r.violations_per_hr for r in arm_b_results]))
    if viol_a > 0:
        d_viol = (viol_a - viol_b) / viol_a * 100.0
    else:
        d_viol = 0.0

    u, p = mann_whitney_u(pooled_a, pooled_b)
    delta = cliffs_delta(pooled_a, pooled_b)

    def pooled_autonomy(results):
        vals = [r.autonomy_pct for r in results if r.autonomy_pct is not None]
        return float(np.mean(vals)) if vals else None

    return ComparisonReport(
        scenario_id=scenario_id, trials_per_arm=k, base_seed=base_seed,
        baseline=arm_a_results, cpe=arm_b_results,
        paired_incidents=paired,
        mean_mttr_baseline_s=mean_a, mean_mttr_cpe_s=mean_b,
        delta_mttr_pct=d_mttr, mttr_ci_pct=mttr_ci,
        re_baseline=re_a, re_cpe=re_b, delta_re_pct=d_re, re_ci_pct=re_ci,
        violations_baseline_per_hr=viol_a, violations_cpe_per_hr=viol_b,
        delta_violations_pct=d_viol,
        mwu_u=u, mwu_p=p, cliffs_delta=delta,
        autonomy_baseline_pct=pooled_autonomy(arm_a_results),
        autonomy_cpe_pct=pooled_autonomy(arm_b_results),
    )


def _paired_incident_count(arm_a, arm_b) -> int:
    """Fault episodes resolved in both arms of the same seeded pair."""
    paired = 0
    for res_a, res_b in zip(arm_a, arm_b):
        resolved_a = {(i.service, i.t_injected_s) for i in res_a.incidents
                      if i.t_recovered_s is not None}
        resolved_b = {(i.service, i.t_injected_s) for i in res_b.incidents
                      if i.t_recovered_s is not None}
        paired += len(resolved_a & resolved_b)
    return paired


def _delta_ci(values_a, values_b, delta_fn, seed: int,
              b: int = BOOTSTRAP_B_DEFAULT, level: float = 0.95,
              paired: bool = False) -> tuple:
    """Bootstrap CI of the relative-improvement statistic."""
    a = np.asarray(values_a, dtype=float)
    bb = np.asarray(values_b, dtype=float)
    rng = np.random.default_rng(seed)
    stats = []
    for _ in range(b):
        if paired:
            idx = rng.integers(0, a.size, size=a.size)
            sa, sb = a[idx], bb[idx]
        else:
            sa = a[rng.integers(0, a.size, size=a.size)]
            sb = bb[rng.integers(0, bb.size, size=bb.size)]
        try:
            stats.append(delta_fn(float(sa.mean()), float(sb.mean())))
        except StatsError:
            continue
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(stats, [alpha, 1.0 - alpha])
    return float(lo), float(hi)
