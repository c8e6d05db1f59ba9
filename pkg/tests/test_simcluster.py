"""Simulator unit tests: performance-model oracles, fault semantics,
action semantics, and determinism."""

from __future__ import annotations

import pytest

from opsloop.simcluster import (ActionKind, FaultEvent, FaultKind,
                                LATENCY_CAP_MS, RESTART_DELAY_S,
                                RHO_CEILING, SimError, WorkloadProfile)

from .conftest import make_cluster, make_spec


# ---- performance model oracles (noise off, hand-computed) ------------------

def test_nominal_latency_and_error_oracle(quiet_cluster):
    rt = quiet_cluster.services["web"]
    rho = 170.0 / (10 * 50.0)  # 0.34
    assert rt.utilization == pytest.approx(rho)
    assert rt.p95_latency_ms == pytest.approx(40.0 / (1.0 - rho))
    assert rt.error_rate == 0.0
    assert rt.served_rps == pytest.approx(170.0)
    assert rt.dropped_rps == 0.0


def test_cpu_fraction_blends_idle_floor(quiet_cluster):
    rt = quiet_cluster.services["web"]
    rho = 0.34
    expected = 0.15 + (1.0 - 0.15) * rho
    for replica in rt.replicas:
        assert replica.cpu_fraction == pytest.approx(expected)
    assert rt.cpu_vcpu == pytest.approx(10 * expected)


def test_overload_oracle():
    state = make_cluster(offered_rps=600.0)  # capacity 500 -> rho 1.2
    rt = state.services["web"]
    assert rt.error_rate == pytest.approx(0.2)
    assert rt.p95_latency_ms == pytest.approx(40.0 / (1.0 - RHO_CEILING))
    assert rt.dropped_rps == pytest.approx(120.0)
    assert rt.served_rps == pytest.approx(480.0)
    for replica in rt.replicas:
        assert replica.cpu_fraction == 1.0


def test_latency_cap_and_total_loss_with_zero_capacity():
    state = make_cluster(offered_rps=100.0)
    state.inject_fault(FaultEvent(FaultKind.POD_EVICTION, "web", 0, 10))
    rt = state.services["web"]
    assert rt.available_replicas == 0
    assert rt.p95_latency_ms == LATENCY_CAP_MS
    assert rt.error_rate == 1.0
    assert rt.served_rps == 0.0


def test_error_rate_clamped_to_one():
    state = make_cluster(offered_rps=2000.0, desired_replicas=2, min_replicas=1)
    assert state.services["web"].error_rate == 1.0


# ---- workload profiles ------------------------------------------------------

def test_bursty_square_wave_burst_first():
    profile = WorkloadProfile(kind="bursty", base_rps=100.0, amplitude=160.0,
                              period_s=600.0)
    assert profile.offered_rps(0) == 260.0
    assert profile.offered_rps(299) == 260.0
    assert profile.offered_rps(300) == 100.0
    assert profile.offered_rps(599) == 100.0
    assert profile.offered_rps(600) == 260.0


def test_spike_script_segments_and_fallback():
    profile = WorkloadProfile(kind="spike-script", base_rps=50.0,
                              script=((0, 100, 80.0), (100, 200, 120.0)))
    assert profile.offered_rps(0) == 80.0
    assert profile.offered_rps(150) == 120.0
    assert profile.offered_rps(250) == 50.0


def test_spike_script_validation_rejects_overlap():
    bad = WorkloadProfile(kind="spike-script",
                          script=((0, 100, 80.0), (50, 200, 90.0)))
    with pytest.raises(SimError):
        bad.validate()


# ---- fault semantics --------------------------------------------------------

def test_cpu_saturation_persists_until_restart():
    state = make_cluster(offered_rps=170.0)
    state.inject_fault(FaultEvent(FaultKind.CPU_SATURATION, "web", 0, 0.2))
    rt = state.services["web"]
    assert all(r.capacity_multiplier == 0.2 for r in rt.replicas)
    state.step(300)
    assert all(r.capacity_multiplier == 0.2 for r in rt.replicas)
    # rho = 170 / (10 * 50 * 0.2) = 1.7 -> saturated
    assert rt.error_rate == pytest.approx(0.7, abs=1e-9)
    state.apply_action(ActionKind.RESTART_POD, "web")
    assert rt.available_replicas == 0  # all replicas cycling
    state.step(RESTART_DELAY_S)
    assert rt.available_replicas == 10
    assert all(r.capacity_multiplier == 1.0 for r in rt.replicas)


def test_timed_cpu_saturation_expires():
    state = make_cluster(faults=[
        FaultEvent(FaultKind.CPU_SATURATION, "web", 10, 0.5, duration_s=60)])
    state.step(20)
    rt = state.services["web"]
    assert all(r.capacity_multiplier == 0.5 for r in rt.replicas)
    state.step(60)
    assert all(r.capacity_multiplier == 1.0 for r in rt.replicas)


def test_pod_eviction_stays_down_until_restart():
    state = make_cluster()
    state.inject_fault(FaultEvent(FaultKind.POD_EVICTION, "web", 0, 4))
    rt = state.services["web"]
    assert rt.available_replicas == 6
    state.step(600)
    assert rt.available_replicas == 6  # no self-healing
    state.apply_action(ActionKind.RESTART_POD, "web")
    state.step(RESTART_DELAY_S - 1)
    assert rt.available_replicas == 6
    state.step(1)
    assert rt.available_replicas == 10


def test_config_drift_and_rollback_restore_pre_drift_value():
    state = make_cluster()
    state.inject_fault(FaultEvent(FaultKind.CONFIG_DRIFT, "web", 0, 3))
    rt = state.services["web"]
    assert rt.drifted and rt.desired_replicas == 3
    state.step(30)
    assert len(rt.replicas) == 3
    state.apply_action(ActionKind.ROLLBACK_CONFIG, "web")
    assert not rt.drifted
    assert rt.desired_replicas == 10
    assert rt.available_replicas == 10


def test_rollback_without_drift_is_noop():
    state = make_cluster()
    result = state.apply_action(ActionKind.ROLLBACK_CONFIG, "web")
    assert result["noop"] is True


def test_scale_while_drifted_redeclares_intent():
    state = make_cluster()
    state.inject_fault(FaultEvent(FaultKind.CONFIG_DRIFT, "web", 0, 3))
    state.apply_action(ActionKind.SCALE_UP, "web", amount=2)
    state.apply_action(ActionKind.ROLLBACK_CONFIG, "web")
    assert state.services["web"].desired_replicas == 5


# ---- actions ----------------------------------------------------------------

def test_scaling_clamps_to_spec_bounds():
    state = make_cluster()
    result = state.apply_action(ActionKind.SCALE_UP, "web", amount=20)
    assert result["clamped"] is True
    assert state.services["web"].desired_replicas == 16
    result = state.apply_action(ActionKind.SCALE_DOWN, "web", amount=30)
    assert result["clamped"] is True
    assert state.services["web"].desired_replicas == 2


def test_scale_down_removes_unhealthy_first():
    state = make_cluster()
    state.inject_fault(FaultEvent(FaultKind.POD_EVICTION, "web", 0, 2))
    state.apply_action(ActionKind.SCALE_DOWN, "web", amount=2)
    rt = state.services["web"]
    assert len(rt.replicas) == 8
    assert rt.available_replicas == 8


def test_restart_pod_noop_when_all_healthy(quiet_cluster):
    result = quiet_cluster.apply_action(ActionKind.RESTART_POD, "web")
    assert result["noop"] is True and result["restarted"] == 0


def test_unknown_service_raises(quiet_cluster):
    with pytest.raises(SimError):
        quiet_cluster.apply_action(ActionKind.SCALE_UP, "ghost", 1)


# ---- validation -------------------------------------------------------------

@pytest.mark.parametrize("overrides", [
    dict(min_replicas=0),
    dict(desired_replicas=1),       # below min_replicas=2
    dict(desired_replicas=99),      # above max_replicas=16
    dict(capacity_rps_per_replica=0.0),
    dict(base_latency_ms=0.0),
    dict(idle_cpu_fraction=1.0),
])
def test_spec_validation_rejects_bad_values(overrides):
    with pytest.raises(SimError):
        make_spec(**overrides).validate()


@pytest.mark.parametrize("fault", [
    FaultEvent(FaultKind.CPU_SATURATION, "web", 0, 1.5),
    FaultEvent(FaultKind.POD_EVICTION, "web", 0, 0),
    FaultEvent(FaultKind.CONFIG_DRIFT, "web", -1, 3),
])
def test_fault_validation(fault):
    with pytest.raises(SimError):
        fault.validate()


def test_fault_targeting_unknown_service_rejected():
    with pytest.raises(SimError):
        make_cluster(faults=[FaultEvent(FaultKind.POD_EVICTION, "ghost", 0, 1)])


# ---- determinism ------------------------------------------------------------

def test_identical_seeds_reproduce_trajectories():
    def trajectory(seed):
        state = make_cluster(noise_sigma=0.03, seed=seed, faults=[
            FaultEvent(FaultKind.CPU_SATURATION, "web", 100, 0.3)])
        points = []
        for _ in range(300):
            state.step(1)
            rt = state.services["web"]
            points.append((rt.p95_latency_ms, rt.served_rps, rt.error_rate))
        return points

    assert trajectory(7) == trajectory(7)
    assert trajectory(7) != trajectory(8)


def test_snapshot_metrics_is_a_pure_read(quiet_cluster):
    first = quiet_cluster.snapshot_metrics()
    second = quiet_cluster.snapshot_metrics()
    assert first == second
    assert set(first["web"]) == {"cpu_vcpu", "mem", "rps", "p95_latency_ms",
                                 "error_rate", "desired_replicas",
                                 "available_replicas"}
