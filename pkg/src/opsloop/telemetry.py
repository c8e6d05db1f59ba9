"""Data plane: metric scraping, time-series storage, SLO evaluation and
incident lifecycle tracking (detection / recovery timestamps)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .simcluster import ClusterState, SCRAPE_INTERVAL_S

METRIC_NAMES = (
    "cpu_vcpu", "mem", "rps", "p95_latency_ms", "error_rate",
    "desired_replicas", "available_replicas",
)

WARMUP_S_DEFAULT = 600


class TelemetryError(Exception):
    pass


@dataclass(frozen=True)
class TelemetrySample:
    ts_s: int
    metric: str
    value: float
    labels: dict

    def key(self):
        return (self.metric, tuple(sorted(self.labels.items())))


@dataclass(frozen=True)
class SloSpec:
    latency_p95_ms_max: float = 200.0
    error_rate_max: float = 0.02
    strictness: str = "standard"


SLO_PRESETS = {
    "standard": SloSpec(200.0, 0.02, "standard"),
    "strict": SloSpec(150.0, 0.01, "strict"),
    "relaxed": SloSpec(300.0, 0.05, "relaxed"),
}


class SloVerdict(str, Enum):
    COMPLIANT = "compliant"
    NON_COMPLIANT = "non_compliant"
    UNKNOWN = "unknown"


class MetricStore:
    """Append-only store of (metric, labels) -> time-ordered points."""

    def __init__(self):
        self._series: dict = {}

    def append(self, sample: TelemetrySample) -> None:
        points = self._series.setdefault(sample.key(), [])
        if points and sample.ts_s <= points[-1][0]:
            raise TelemetryError(
                f"non-increasing ts {sample.ts_s} for {sample.metric}")
        points.append((sample.ts_s, sample.value))

    def query_window(self, metric: str, labels: dict, t_from: float,
                     t_to: float) -> list:
        if t_from > t_to:
            return []
        key = (metric, tuple(sorted(labels.items())))
        points = self._series.get(key, [])
        return [(ts, v) for ts, v in points if t_from <= ts <= t_to]

    def keys(self):
        return list(self._series.keys())

    def all_samples(self) -> list:
        out = []
        for (metric, labels), points in self._series.items():
            for ts, v in points:
                out.append(TelemetrySample(ts, metric, v, dict(labels)))
        out.sort(key=lambda s: (s.ts_s, s.metric, sorted(s.labels.items())))
        return out


def scrape(state: ClusterState, store: MetricStore,
           labels: Optional[dict] = None) -> list:
    """Record one sample per (service, metric) at the current clock."""
    if state.clock_s % SCRAPE_INTERVAL_S != 0:
        raise TelemetryError(f"scrape at non-aligned clock {state.clock_s}")
    labels = labels or {}
    samples = []
    snap = state.snapshot_metrics()
    for service in sorted(snap):
        values = snap[service]
        for metric in METRIC_NAMES:
            sample = TelemetrySample(
                ts_s=state.clock_s, metric=metric, value=float(values[metric]),
                labels={"service": service, **labels})
            store.append(sample)
            samples.append(sample)
    return samples


def evaluate_slo(samples_by_metric: dict, slo: SloSpec) -> SloVerdict:
    """Verdict for one service at one scrape; missing metrics -> unknown."""
    p95 = samples_by_metric.get("p95_latency_ms")
    err = samples_by_metric.get("error_rate")
    if p95 is None or err is None:
        return SloVerdict.UNKNOWN
    if p95 <= slo.latency_p95_ms_max and err <= slo.error_rate_max:
        return SloVerdict.COMPLIANT
    return SloVerdict.NON_COMPLIANT


# ---- incidents -------------------------------------------------------------

RECOVERY_SUSTAIN_SCRAPES = 2


@dataclass
class IncidentRecord:
    id: str
    service: str
    fault_kind: str
    t_injected_s: int
    mode: str
    t_detected_s: Optional[int] = None
    t_recovered_s: Optional[int] = None
    detector: Optional[str] = None
    # First scrape ts of the current sustained-compliant window.
    _window_start: Optional[int] = field(default=None, repr=False)
    _window_len: int = field(default=0, repr=False)

    @property
    def open(self) -> bool:
        return self.t_recovered_s is None

    @property
    def detected(self) -> bool:
        return self.t_detected_s is not None


class IncidentTracker:
    """Owns incident lifecycles; at most one open incident per service."""

    def __init__(self, mode: str):
        self.mode = mode
        self.incidents: list[IncidentRecord] = []
        self._counter = 0

    def open_incident(self, service: str, fault_kind: str,
                      t_injected: int) -> IncidentRecord:
        existing = self.open_for(service)
        if existing is not None:
            return existing
        self._counter += 1
        rec = IncidentRecord(
            id=f"inc-{self._counter:03d}", service=service,
            fault_kind=fault_kind, t_injected_s=t_injected, mode=self.mode)
        self.incidents.append(rec)
        return rec

    def open_for(self, service: str) -> Optional[IncidentRecord]:
        for rec in reversed(self.incidents):
            if rec.service == service and rec.open:
                return rec
        return None

    def mark_detected(self, incident_id: str, t: int, detector: str) -> bool:
        rec = self._by_id(incident_id)
        if rec.detected:
            return False  # first detection wins
        rec.t_detected_s = t
        rec.detector = detector
        return True

    def check_recovery(self, incident_id: str, verdict: SloVerdict,
                       available: int, desired: int, drifted: bool,
                       ts: int) -> bool:
        """Advance the sustained-recovery window at one scrape.

        Recovered after RECOVERY_SUSTAIN_SCRAPES consecutive good scrapes;
        t_recovered is the first scrape of that window.
        """
        rec = self._by_id(incident_id)
        if not rec.detected or not rec.open:
            return not rec.open
        good = (verdict == SloVerdict.COMPLIANT and available == desired
                and not drifted)
        if good:
            if rec._window_len == 0:
                rec._window_start = ts
            rec._window_len += 1
            if rec._window_len >= RECOVERY_SUSTAIN_SCRAPES:
                rec.t_recovered_s = rec._window_start
                return True
        else:
            rec._window_start = None
            rec._window_len = 0
        return False

    def resolved(self, warmup_s: int = 0) -> list:
        return [r for r in self.incidents
                if r.t_recovered_s is not None and r.t_injected_s >= warmup_s]

    def _by_id(self, incident_id: str) -> IncidentRecord:
        for rec in self.incidents:
            if rec.id == incident_id:
                return rec
        raise TelemetryError(f"unknown incident {incident_id!r}")


# ---- export ----------------------------------------------------------------

def export_jsonl(store: MetricStore, path: str) -> None:
    """One object per line, ordered by ts then metric; byte-deterministic."""
    with open(path, "w", encoding="utf-8") as fh:
        for sample in store.all_samples():
            fh.write(json.dumps(
                {"ts": sample.ts_s, "metric": sample.metric,
                 "value": sample.value, "labels": sample.labels},
                sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def import_jsonl(path: str) -> MetricStore:
    store = MetricStore()
    with open(path, encoding="utf-8") as fh:
        samples = [json.loads(line) for line in fh if line.strip()]
    samples.sort(key=lambda d: (d["ts"], d["metric"]))
    for d in samples:
        store.append(TelemetrySample(d["ts"], d["metric"], d["value"],
                                     d["labels"]))
    return store
