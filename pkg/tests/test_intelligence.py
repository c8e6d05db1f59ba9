"""Intelligence-plane tests: isolation-forest math, detection triggers,
the static baseline rule, and remediation reasoning."""

from __future__ import annotations

import math

import numpy as np
import pytest

from opsloop.intelligence import (ALERT_SUSTAIN_SCRAPES, AnomalyReport,
                                  BreachStreaks, EULER_GAMMA, FEATURE_NAMES,
                                  FeatureVector, IntelligenceError,
                                  ServiceSnapshot, UtilizationWatch,
                                  baseline_alert_rule, c_factor, detect,
                                  fit_forest, make_feature_vector, reason,
                                  scale_up_target, score, score_batch,
                                  score_from_depth)
from opsloop.simcluster import ActionKind
from opsloop.telemetry import SloVerdict


def _vectors(points: np.ndarray) -> list:
    return [FeatureVector(ts_s=30 * i, service="web", values=tuple(row))
            for i, row in enumerate(points)]


def _snapshot(**overrides) -> ServiceSnapshot:
    base = dict(service="web", desired_replicas=10, available_replicas=10,
                drifted=False, offered_rps=170.0,
                capacity_rps_per_replica=50.0, mean_capacity_multiplier=1.0,
                min_replicas=2, max_replicas=16, utilization=0.34)
    base.update(overrides)
    return ServiceSnapshot(**base)


def _report(service="web", score_=0.9, trigger="forest") -> AnomalyReport:
    return AnomalyReport(ts_s=900, service=service, score=score_,
                         threshold=0.6, trigger=trigger, deviations={})


# ---- feature extraction -----------------------------------------------------

def test_feature_vector_order_and_values():
    metrics = {"cpu_vcpu": 4.0, "p95_latency_ms": 80.0, "error_rate": 0.01,
               "rps": 170.0, "desired_replicas": 10.0,
               "available_replicas": 8.0}
    fv = make_feature_vector(900, "web", metrics, prev_p95=60.0,
                             vcpu_capacity=10.0)
    assert len(fv.values) == len(FEATURE_NAMES)
    assert fv.values == pytest.approx((0.4, 80.0, 0.01, 170.0, 0.8, 20.0))


def test_first_scrape_has_zero_latency_delta():
    metrics = {"cpu_vcpu": 1.0, "p95_latency_ms": 50.0, "error_rate": 0.0,
               "rps": 100.0, "desired_replicas": 10.0,
               "available_replicas": 10.0}
    fv = make_feature_vector(900, "web", metrics, prev_p95=None,
                             vcpu_capacity=10.0)
    assert fv.values[5] == 0.0


# ---- isolation forest -------------------------------------------------------

def test_c_factor_closed_form():
    assert c_factor(1) == 0.0
    assert c_factor(2) == 1.0
    n = 100
    expected = 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n
    assert c_factor(n) == pytest.approx(expected)


def test_fit_requires_minimum_training_set():
    rng = np.random.default_rng(0)
    assert fit_forest(_vectors(rng.normal(size=(7, 6))), seed=0) is None
    assert fit_forest(_vectors(rng.normal(size=(8, 6))), seed=0) is not None


def test_subsample_shrinks_to_training_size():
    rng = np.random.default_rng(0)
    model = fit_forest(_vectors(rng.normal(size=(20, 6))), seed=0, psi=256)
    assert model.psi == 20
    assert model.c_psi == c_factor(20)
    assert all(t.height_limit == math.ceil(math.log2(20))
               for t in model.trees)


def test_scores_bounded_and_nominal_near_half():
    rng = np.random.default_rng(1)
    cloud = rng.normal(size=(200, 6))
    model = fit_forest(_vectors(cloud), seed=1)
    scores = score_batch(model, cloud)
    assert np.all(scores > 0.0) and np.all(scores < 1.0)
    assert abs(float(np.median(scores)) - 0.5) < 0.15


def test_score_at_mean_depth_c_psi_is_exactly_half():
    assert score_from_depth(c_factor(256), c_factor(256)) == 0.5


def test_batch_scoring_matches_single_point_path():
    rng = np.random.default_rng(2)
    cloud = rng.normal(size=(64, 6))
    model = fit_forest(_vectors(cloud), seed=2, n_trees=25)
    probes = _vectors(rng.normal(size=(10, 6)))
    batch = score_batch(model, np.array([fv.values for fv in probes]))
    singles = [score(model, fv) for fv in probes]
    assert batch == pytest.approx(singles)


def test_forest_is_seed_deterministic():
    rng = np.random.default_rng(3)
    training = _vectors(rng.normal(size=(50, 6)))
    probe = FeatureVector(0, "web", tuple(np.full(6, 4.0)))
    a = score(fit_forest(training, seed=9), probe)
    b = score(fit_forest(training, seed=9), probe)
    c = score(fit_forest(training, seed=10), probe)
    assert a == b
    assert a != c


# ---- detection --------------------------------------------------------------

def test_detect_fires_on_forest_score():
    rng = np.random.default_rng(4)
    model = fit_forest(_vectors(rng.normal(size=(100, 6))), seed=4)
    outlier = FeatureVector(900, "web", tuple(np.full(6, 12.0)))
    report = detect(model, outlier, breach_streak=0)
    assert report is not None and report.trigger == "forest"
    assert report.score >= report.threshold
    assert report.deviations  # far outside the training range


def test_detect_falls_back_to_slo_streak_without_model():
    fv = FeatureVector(900, "web", (0.3,) * 6)
    assert detect(None, fv, breach_streak=1) is None
    report = detect(None, fv, breach_streak=ALERT_SUSTAIN_SCRAPES)
    assert report is not None and report.trigger == "slo_fallback"


def test_baseline_alert_rule_latches_once():
    streaks = [baseline_alert_rule(n) for n in (0, 1, 2, 3, 4)]
    assert streaks == [False, False, True, False, False]


def test_breach_streaks_reset_on_compliance():
    streaks = BreachStreaks()
    assert streaks.update("web", SloVerdict.NON_COMPLIANT) == 1
    assert streaks.update("web", SloVerdict.NON_COMPLIANT) == 2
    assert streaks.update("web", SloVerdict.COMPLIANT) == 0
    assert streaks.get("other") == 0


# ---- reasoning --------------------------------------------------------------

def test_reason_priority_drift_first():
    proposals = reason(_report(), _snapshot(drifted=True, available_replicas=6,
                                            utilization=0.95))
    assert [p.kind for p in proposals] == [ActionKind.ROLLBACK_CONFIG]
    assert proposals[0].risk == "high"


def test_reason_availability_deficit_restarts():
    proposals = reason(_report(), _snapshot(available_replicas=7))
    assert proposals[0].kind == ActionKind.RESTART_POD
    assert proposals[0].rationale == "availability_deficit"


def test_reason_degraded_capacity_restarts():
    proposals = reason(_report(), _snapshot(mean_capacity_multiplier=0.2,
                                            utilization=0.95))
    assert proposals[0].kind == ActionKind.RESTART_POD
    assert proposals[0].rationale == "degraded_capacity"


def test_reason_overload_scales_to_headroom_target():
    snap = _snapshot(offered_rps=600.0, utilization=1.2)
    proposals = reason(_report(), snap)
    assert proposals[0].kind == ActionKind.SCALE_UP
    # ceil(600 / (50 * 0.75)) = 16 replicas -> +6 from 10
    assert scale_up_target(snap) == 16
    assert proposals[0].amount == 6


def test_scale_up_target_clamped_to_max():
    snap = _snapshot(offered_rps=5000.0, utilization=10.0)
    assert scale_up_target(snap) == snap.max_replicas


def test_reason_unclassified_anomaly_probes_with_restart():
    proposals = reason(_report(), _snapshot())
    assert proposals[0].kind == ActionKind.RESTART_POD
    assert proposals[0].rationale == "anomaly_unclassified"


def test_reason_rejects_mismatched_service():
    with pytest.raises(IntelligenceError):
        reason(_report(service="other"), _snapshot())


def test_utilization_watch_requires_sustained_low_load():
    watch = UtilizationWatch(sustain=3)
    low = _snapshot(utilization=0.1)
    assert watch.update(low) is None
    assert watch.update(low) is None
    proposal = watch.update(low)
    assert proposal is not None and proposal.kind == ActionKind.SCALE_DOWN
    assert proposal.amount == 1
    # Counter restarts after firing.
    assert watch.update(low) is None


def test_utilization_watch_resets_on_disturbance():
    watch = UtilizationWatch(sustain=2)
    low = _snapshot(utilization=0.1)
    assert watch.update(low) is None
    assert watch.update(_snapshot(utilization=0.1, available_replicas=9)) is None
    assert watch.update(low) is None  # streak restarted from zero


def test_utilization_watch_respects_min_replicas():
    watch = UtilizationWatch(sustain=1)
    at_floor = _snapshot(utilization=0.05, desired_replicas=2)
    assert watch.update(at_floor) is None
