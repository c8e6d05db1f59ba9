"""Intelligence plane: isolation-forest anomaly scoring over sliding-window
telemetry features, the static alert rule used by the baseline mode, and the
rule table mapping anomalies to proposed remediation actions."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .simcluster import ActionKind
from .telemetry import SloVerdict

EULER_GAMMA = 0.5772156649

N_TREES_DEFAULT = 100
SUBSAMPLE_DEFAULT = 256
MIN_TRAINING_VECTORS = 8
ANOMALY_THRESHOLD_DEFAULT = 0.60
ALERT_SUSTAIN_SCRAPES = 2
# Scaled features are clamped to this band so unseen extremes still stand
# apart from the [0, 1] training range.
SCALE_CLAMP_LO = -0.5
SCALE_CLAMP_HI = 1.5

FEATURE_NAMES = (
    "cpu_utilization_fraction", "p95_latency_ms", "error_rate", "rps",
    "availability_ratio", "delta_p95_ms",
)

SCALE_UP_TARGET_UTILIZATION = 0.75
OVERLOAD_UTILIZATION = 0.80
SCALE_DOWN_UTILIZATION = 0.30
SCALE_DOWN_SUSTAIN_SCRAPES = 10


class IntelligenceError(Exception):
    pass


@dataclass(frozen=True)
class FeatureVector:
    ts_s: int
    service: str
    values: tuple  # fixed order per FEATURE_NAMES


def make_feature_vector(ts_s: int, service: str, metrics: dict,
                        prev_p95: Optional[float], vcpu_capacity: float) -> FeatureVector:
    """Build the fixed-order feature vector from one scrape's raw metrics."""
    desired = max(1.0, metrics["desired_replicas"])
    cpu_util = metrics["cpu_vcpu"] / max(1e-9, vcpu_capacity)
    p95 = metrics["p95_latency_ms"]
    delta = 0.0 if prev_p95 is None else p95 - prev_p95
    values = (
        cpu_util,
        p95,
        metrics["error_rate"],
        metrics["rps"],
        metrics["available_replicas"] / desired,
        delta,
    )
    return FeatureVector(ts_s=ts_s, service=service, values=values)


# ---- isolation forest ------------------------------------------------------

@functools.lru_cache(maxsize=None)
def c_factor(n: int) -> float:
    """Average unsuccessful-search path length in a BST of n points."""
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * (math.log(n - 1.0) + EULER_GAMMA) - 2.0 * (n - 1.0) / n


@dataclass
class _Node:
    split_dim: int = -1
    split_value: float = 0.0
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None
    size: int = 0  # leaf only

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class IsolationTree:
    root: _Node
    height_limit: int


@dataclass
class IsolationForestModel:
    trees: list
    psi: int
    c_psi: float
    scale_min: np.ndarray
    scale_max: np.ndarray
    n_trees: int

    def summary(self) -> dict:
        return {"n_trees": self.n_trees, "subsample": self.psi,
                "c_psi": round(self.c_psi, 6)}


def _grow(x: np.ndarray, depth: int, limit: int,
          rng: np.random.Generator) -> _Node:
    n = x.shape[0]
    if depth >= limit or n <= 1:
        return _Node(size=n)
    lows = x.min(axis=0)
    highs = x.max(axis=0)
    dims = np.flatnonzero(lows < highs)
    if dims.size == 0:
        return _Node(size=n)
    dim = int(dims[rng.integers(dims.size)])
    lo, hi = lows[dim], highs[dim]
    split = rng.uniform(lo, hi)
    mask = x[:, dim] < split
    return _Node(split_dim=dim, split_value=split,
                 left=_grow(x[mask], depth + 1, limit, rng),
                 right=_grow(x[~mask], depth + 1, limit, rng))


def fit_forest(training: list, seed: int, n_trees: int = N_TREES_DEFAULT,
               psi: int = SUBSAMPLE_DEFAULT) -> Optional[IsolationForestModel]:
    """Fit the forest on training FeatureVectors; None if too few vectors."""
    if len(training) < MIN_TRAINING_VECTORS:
        return None
    x = np.array([fv.values for fv in training], dtype=float)
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    xs = np.clip((x - lo) / span, SCALE_CLAMP_LO, SCALE_CLAMP_HI)
    psi = min(psi, len(training))
    limit = math.ceil(math.log2(max(2, psi)))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        idx = rng.choice(len(training), size=psi, replace=False)
        trees.append(IsolationTree(root=_grow(xs[idx], 0, limit, rng),
                                   height_limit=limit))
    return IsolationForestModel(trees=trees, psi=psi, c_psi=c_factor(psi),
                                scale_min=lo, scale_max=hi, n_trees=n_trees)


def _path_length(node: _Node, v: np.ndarray, depth: int) -> float:
    if node.is_leaf:
        return depth + c_factor(node.size)
    if v[node.split_dim] < node.split_value:
        return _path_length(node.left, v, depth + 1)
    return _path_length(node.right, v, depth + 1)


def score_from_depth(mean_depth: float, c_psi: float) -> float:
    return 2.0 ** (-mean_depth / c_psi)


def _batch_depths(node: _Node, xs: np.ndarray, idx: np.ndarray,
                  depth: int, out: np.ndarray) -> None:
    if node.is_leaf:
        out[idx] += depth + c_factor(node.size)
        return
    mask = xs[idx, node.split_dim] < node.split_value
    _batch_depths(node.left, xs, idx[mask], depth + 1, out)
    _batch_depths(node.right, xs, idx[~mask], depth + 1, out)


def score_batch(model: IsolationForestModel, vectors: np.ndarray) -> np.ndarray:
    """Scores for many points at once; equivalent to score() per row."""
    x = np.asarray(vectors, dtype=float)
    span = np.where(model.scale_max > model.scale_min,
                    model.scale_max - model.scale_min, 1.0)
    xs = np.clip((x - model.scale_min) / span, SCALE_CLAMP_LO, SCALE_CLAMP_HI)
    total = np.zeros(xs.shape[0])
    idx = np.arange(xs.shape[0])
    for tree in model.trees:
        _batch_depths(tree.root, xs, idx, 0, total)
    return 2.0 ** (-(total / len(model.trees)) / model.c_psi)


def score(model: IsolationForestModel, fv: FeatureVector) -> float:
    """Anomaly score in (0,1); 0.5 marks the nominal regime."""
    v = np.asarray(fv.values, dtype=float)
    span = np.where(model.scale_max > model.scale_min,
                    model.scale_max - model.scale_min, 1.0)
    vs = np.clip((v - model.scale_min) / span, SCALE_CLAMP_LO, SCALE_CLAMP_HI)
    depths = [_path_length(t.root, vs, 0) for t in model.trees]
    return score_from_depth(float(np.mean(depths)), model.c_psi)


# ---- detection -------------------------------------------------------------

@dataclass(frozen=True)
class AnomalyReport:
    ts_s: int
    service: str
    score: float
    threshold: float
    trigger: str  # "forest" | "slo_fallback"
    deviations: dict


def feature_deviations(model: Optional[IsolationForestModel],
                       fv: FeatureVector) -> dict:
    """Per-dimension deviation from the training range, in span units."""
    if model is None:
        return {}
    v = np.asarray(fv.values, dtype=float)
    span = np.where(model.scale_max > model.scale_min,
                    model.scale_max - model.scale_min, 1.0)
    scaled = (v - model.scale_min) / span
    out = {}
    for name, s in zip(FEATURE_NAMES, scaled):
        if s > 1.0:
            out[name] = round(float(s - 1.0), 4)
        elif s < 0.0:
            out[name] = round(float(s), 4)
    return out


class BreachStreaks:
    """Tracks consecutive SLO-breach scrapes per service."""

    def __init__(self):
        self._streak: dict = {}

    def update(self, service: str, verdict: SloVerdict) -> int:
        if verdict == SloVerdict.NON_COMPLIANT:
            self._streak[service] = self._streak.get(service, 0) + 1
        else:
            self._streak[service] = 0
        return self._streak[service]

    def get(self, service: str) -> int:
        return self._streak.get(service, 0)


def detect(model: Optional[IsolationForestModel], fv: FeatureVector,
           breach_streak: int,
           threshold: float = ANOMALY_THRESHOLD_DEFAULT) -> Optional[AnomalyReport]:
    """Forest score over threshold, or the SLO-breach fallback rule."""
    s = score(model, fv) if model is not None else 0.0
    if model is not None and s >= threshold:
        return AnomalyReport(ts_s=fv.ts_s, service=fv.service, score=s,
                             threshold=threshold, trigger="forest",
                             deviations=feature_deviations(model, fv))
    if breach_streak >= ALERT_SUSTAIN_SCRAPES:
        return AnomalyReport(ts_s=fv.ts_s, service=fv.service, score=s,
                             threshold=threshold, trigger="slo_fallback",
                             deviations=feature_deviations(model, fv))
    return None


def baseline_alert_rule(breach_streak: int) -> bool:
    """The baseline's only detector: two consecutive breaching scrapes."""
    return breach_streak == ALERT_SUSTAIN_SCRAPES


# ---- reasoning -------------------------------------------------------------

RISK_BY_ACTION = {
    ActionKind.SCALE_UP: "low",
    ActionKind.RESTART_POD: "low",
    ActionKind.SCALE_DOWN: "high",
    ActionKind.ROLLBACK_CONFIG: "high",
}


@dataclass(frozen=True)
class ProposedAction:
    kind: ActionKind
    service: str
    amount: int
    risk: str
    rationale: str


def _mk(kind: ActionKind, service: str, amount: int = 0,
        rationale: str = "") -> ProposedAction:
    return ProposedAction(kind=kind, service=service, amount=amount,
                          risk=RISK_BY_ACTION[kind], rationale=rationale)


@dataclass(frozen=True)
class ServiceSnapshot:
    """Read-only slice of cluster state the reasoner is allowed to see."""
    service: str
    desired_replicas: int
    available_replicas: int
    drifted: bool
    offered_rps: float
    capacity_rps_per_replica: float
    mean_capacity_multiplier: float
    min_replicas: int
    max_replicas: int
    utilization: float


def scale_up_target(snap: ServiceSnapshot) -> int:
    """Replicas needed to bring utilization to the headroom target."""
    per_replica = snap.capacity_rps_per_replica * max(
        snap.mean_capacity_multiplier, 1e-6)
    need = math.ceil(snap.offered_rps / (per_replica * SCALE_UP_TARGET_UTILIZATION))
    return min(max(need, snap.desired_replicas + 1), snap.max_replicas)


def reason(report: AnomalyReport, snap: ServiceSnapshot) -> list:
    """Dominant-symptom dispatch; always yields at least one proposal.

    Priority: config drift, availability deficit, degraded pods, overload.
    """
    if snap.service != report.service:
        raise IntelligenceError("report/snapshot service mismatch")
    if snap.drifted:
        return [_mk(ActionKind.ROLLBACK_CONFIG, snap.service,
                    rationale="config_drift")]
    if snap.available_replicas < snap.desired_replicas:
        return [_mk(ActionKind.RESTART_POD, snap.service,
                    rationale="availability_deficit")]
    if snap.mean_capacity_multiplier < 1.0:
        return [_mk(ActionKind.RESTART_POD, snap.service,
                    rationale="degraded_capacity")]
    if snap.utilization >= OVERLOAD_UTILIZATION:
        target = scale_up_target(snap)
        amount = max(1, target - snap.desired_replicas)
        return [_mk(ActionKind.SCALE_UP, snap.service, amount=amount,
                    rationale="over_utilization")]
    # Anomalous but no actionable symptom: conservative single restart probe.
    return [_mk(ActionKind.RESTART_POD, snap.service,
                rationale="anomaly_unclassified")]


class UtilizationWatch:
    """Sustained low-utilization tracker driving the scale-down rule."""

    def __init__(self, sustain: int = SCALE_DOWN_SUSTAIN_SCRAPES):
        self.sustain = sustain
        self._low: dict = {}

    def update(self, snap: ServiceSnapshot) -> Optional[ProposedAction]:
        key = snap.service
        if (snap.utilization < SCALE_DOWN_UTILIZATION
                and snap.desired_replicas > snap.min_replicas
                and not snap.drifted
                and snap.available_replicas == snap.desired_replicas):
            self._low[key] = self._low.get(key, 0) + 1
        else:
            self._low[key] = 0
            return None
        if self._low[key] >= self.sustain:
            self._low[key] = 0
            return _mk(ActionKind.SCALE_DOWN, key, amount=1,
                       rationale="sustained_low_utilization")
        return None
