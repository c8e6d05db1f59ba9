"""Shared fixtures: noise-free clusters and small scripted configurations."""

from __future__ import annotations

import pytest

from opsloop.simcluster import (ClusterState, ServiceSpec,
                                WorkloadProfile, init_cluster)


def make_spec(**overrides) -> ServiceSpec:
    base = dict(name="web", desired_replicas=10,
                capacity_rps_per_replica=50.0, vcpu_per_replica=1.0,
                base_latency_ms=40.0, min_replicas=2, max_replicas=16,
                idle_cpu_fraction=0.15)
    base.update(overrides)
    return ServiceSpec(**base)


def make_cluster(offered_rps: float = 170.0, noise_sigma: float = 0.0,
                 faults: list | None = None, seed: int = 1,
                 **spec_overrides) -> ClusterState:
    """Deterministic single-service cluster under steady load."""
    return init_cluster(
        [make_spec(**spec_overrides)],
        WorkloadProfile(kind="steady", base_rps=offered_rps),
        faults or [], seed=seed, noise_sigma=noise_sigma)


@pytest.fixture
def quiet_cluster() -> ClusterState:
    return make_cluster()
