"""Data-plane tests: scrape alignment, store ordering, SLO verdicts,
incident lifecycle, and byte-deterministic export."""

from __future__ import annotations

import pytest

from opsloop.simcluster import SCRAPE_INTERVAL_S
from opsloop.telemetry import (METRIC_NAMES, MetricStore, SLO_PRESETS,
                               SloSpec, SloVerdict, IncidentTracker,
                               TelemetryError, TelemetrySample, evaluate_slo,
                               export_jsonl, import_jsonl, scrape)

from .conftest import make_cluster


# ---- scraping and the store -------------------------------------------------

def test_scrape_records_one_sample_per_metric(quiet_cluster):
    store = MetricStore()
    samples = scrape(quiet_cluster, store, labels={"mode": "cpe"})
    assert len(samples) == len(METRIC_NAMES)
    assert {s.metric for s in samples} == set(METRIC_NAMES)
    assert all(s.labels == {"service": "web", "mode": "cpe"} for s in samples)


def test_scrape_rejects_unaligned_clock(quiet_cluster):
    quiet_cluster.step(SCRAPE_INTERVAL_S - 1)
    with pytest.raises(TelemetryError):
        scrape(quiet_cluster, MetricStore())


def test_store_rejects_non_increasing_timestamps():
    store = MetricStore()
    store.append(TelemetrySample(30, "rps", 1.0, {"service": "web"}))
    with pytest.raises(TelemetryError):
        store.append(TelemetrySample(30, "rps", 2.0, {"service": "web"}))


def test_query_window_is_inclusive_and_label_scoped():
    store = MetricStore()
    for ts in (30, 60, 90, 120):
        store.append(TelemetrySample(ts, "rps", float(ts), {"service": "web"}))
    store.append(TelemetrySample(30, "rps", -1.0, {"service": "other"}))
    points = store.query_window("rps", {"service": "web"}, 60, 90)
    assert points == [(60, 60.0), (90, 90.0)]
    assert store.query_window("rps", {"service": "web"}, 200, 100) == []


# ---- SLO evaluation ---------------------------------------------------------

def test_slo_verdict_boundaries_are_inclusive():
    slo = SloSpec(200.0, 0.02)
    assert evaluate_slo({"p95_latency_ms": 200.0, "error_rate": 0.02},
                        slo) == SloVerdict.COMPLIANT
    assert evaluate_slo({"p95_latency_ms": 200.01, "error_rate": 0.0},
                        slo) == SloVerdict.NON_COMPLIANT
    assert evaluate_slo({"p95_latency_ms": 100.0, "error_rate": 0.021},
                        slo) == SloVerdict.NON_COMPLIANT
    assert evaluate_slo({"p95_latency_ms": 100.0}, slo) == SloVerdict.UNKNOWN


def test_slo_presets():
    assert SLO_PRESETS["standard"] == SloSpec(200.0, 0.02, "standard")
    assert SLO_PRESETS["strict"] == SloSpec(150.0, 0.01, "strict")
    assert SLO_PRESETS["relaxed"] == SloSpec(300.0, 0.05, "relaxed")


# ---- incident lifecycle -----------------------------------------------------

def test_one_open_incident_per_service():
    tracker = IncidentTracker(mode="cpe")
    first = tracker.open_incident("web", "pod_eviction", 700)
    again = tracker.open_incident("web", "cpu_saturation", 750)
    assert again is first
    other = tracker.open_incident("api", "pod_eviction", 700)
    assert other is not first


def test_detection_is_first_wins():
    tracker = IncidentTracker(mode="cpe")
    rec = tracker.open_incident("web", "pod_eviction", 700)
    assert tracker.mark_detected(rec.id, 730, detector="forest") is True
    assert tracker.mark_detected(rec.id, 760, detector="slo_fallback") is False
    assert rec.t_detected_s == 730 and rec.detector == "forest"


def test_recovery_requires_two_sustained_scrapes():
    tracker = IncidentTracker(mode="cpe")
    rec = tracker.open_incident("web", "pod_eviction", 700)
    tracker.mark_detected(rec.id, 730, detector="forest")
    good = (SloVerdict.COMPLIANT, 10, 10, False)
    bad = (SloVerdict.NON_COMPLIANT, 10, 10, False)
    assert not tracker.check_recovery(rec.id, *bad, ts=760)
    assert not tracker.check_recovery(rec.id, *good, ts=790)
    assert tracker.check_recovery(rec.id, *good, ts=820)
    assert rec.t_recovered_s == 790  # first scrape of the sustained window


def test_recovery_window_resets_on_any_bad_condition():
    tracker = IncidentTracker(mode="cpe")
    rec = tracker.open_incident("web", "config_drift", 700)
    tracker.mark_detected(rec.id, 730, detector="forest")
    # SLO fine but drift still present: window must not accumulate.
    assert not tracker.check_recovery(rec.id, SloVerdict.COMPLIANT, 10, 10,
                                      True, ts=760)
    assert not tracker.check_recovery(rec.id, SloVerdict.COMPLIANT, 10, 10,
                                      False, ts=790)
    assert tracker.check_recovery(rec.id, SloVerdict.COMPLIANT, 10, 10,
                                  False, ts=820)
    assert rec.t_recovered_s == 790


def test_recovery_before_detection_does_not_count():
    tracker = IncidentTracker(mode="baseline")
    rec = tracker.open_incident("web", "pod_eviction", 700)
    assert not tracker.check_recovery(rec.id, SloVerdict.COMPLIANT, 10, 10,
                                      False, ts=730)
    assert rec.t_recovered_s is None


def test_resolved_filters_warmup_incidents():
    tracker = IncidentTracker(mode="cpe")
    early = tracker.open_incident("web", "pod_eviction", 100)
    early.t_detected_s, early.t_recovered_s = 130, 190
    late = tracker.open_incident("api", "pod_eviction", 700)
    late.t_detected_s, late.t_recovered_s = 730, 790
    assert tracker.resolved(warmup_s=600) == [late]


# ---- export -----------------------------------------------------------------

def test_jsonl_round_trip_is_byte_deterministic(tmp_path):
    state = make_cluster(noise_sigma=0.03, seed=3)
    store = MetricStore()
    scrape(state, store, labels={"mode": "cpe"})
    state.step(SCRAPE_INTERVAL_S)
    scrape(state, store, labels={"mode": "cpe"})

    first = tmp_path / "a.jsonl"
    second = tmp_path / "b.jsonl"
    export_jsonl(store, str(first))
    export_jsonl(import_jsonl(str(first)), str(second))
    assert first.read_bytes() == second.read_bytes()
    assert first.read_bytes().endswith(b"\n")
