"""Strict YAML config loading for trials and scenarios.

Unknown keys are errors, defaults from the built-in scenarios are applied,
and every resolved value is echoed into the run manifest.
"""

from __future__ import annotations

from dataclasses import asdict

import yaml

from .control import PolicyRule, PolicySet, default_policy_set
from .scenarios import (SCENARIOS, build_trial_config,
                        default_fault_schedule, default_service)
from .simcluster import FaultEvent, FaultKind, ServiceSpec, WorkloadProfile
from .telemetry import SLO_PRESETS, SloSpec


class ConfigError(Exception):
    pass


_TOP_KEYS = {"scenario", "mode", "seed", "duration_s", "warmup_s",
             "services", "workload", "faults", "slo", "policies",
             "anomaly_threshold", "approval_timeout_s", "timeout_decision",
             "noise_sigma", "triage_median_s"}
_SERVICE_KEYS = {"name", "desired_replicas", "capacity_rps_per_replica",
                 "vcpu_per_replica", "base_latency_ms", "min_replicas",
                 "max_replicas", "idle_cpu_fraction"}
_WORKLOAD_KEYS = {"kind", "base_rps", "amplitude", "period_s", "script"}
_FAULT_KEYS = {"kind", "service", "at_s", "magnitude", "duration_s"}
_SLO_KEYS = {"latency_p95_ms_max", "error_rate_max", "strictness"}
_RULE_KEYS = {"id", "kind", "params"}


def _check_keys(mapping: dict, allowed: set, path: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} at {path}")


def load_config(path: str, mode: str | None = None, seed: int | None = None):
    """Parse and validate a trial config file into a TrialConfig."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: parse error{where}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    _check_keys(raw, _TOP_KEYS, "top level")

    scenario_id = raw.get("scenario", "S2")
    if scenario_id not in SCENARIOS:
        raise ConfigError(f"scenario: unknown scenario {scenario_id!r}")
    scenario = SCENARIOS[scenario_id]
    mode = mode or raw.get("mode", "cpe")
    if mode not in ("baseline", "cpe"):
        raise ConfigError(f"mode: must be baseline or cpe, got {mode!r}")
    seed = seed if seed is not None else int(raw.get("seed", 42))

    overrides = {}
    for key in ("duration_s", "warmup_s", "anomaly_threshold",
                "approval_timeout_s", "timeout_decision", "noise_sigma",
                "triage_median_s"):
        if key in raw:
            overrides[key] = raw[key]

    if "services" in raw:
        overrides["services"] = [_parse_service(i, s)
                                 for i, s in enumerate(raw["services"])]
    if "workload" in raw:
        overrides["workload"] = _parse_workload(raw["workload"])
    if "slo" in raw:
        overrides["slo"] = _parse_slo(raw["slo"])
    if "policies" in raw:
        overrides["policies"] = _parse_policies(raw["policies"])
    if "faults" in raw:
        overrides["faults"] = [_parse_fault(i, f)
                               for i, f in enumerate(raw["faults"])]

    config = build_trial_config(scenario, mode, seed)
    services = overrides.pop("services", None)
    if services:
        config.services = services
        main = services[0]
        config.fault_schedule = default_fault_schedule(
            main.name, duration_s=config.duration_s, warmup_s=config.warmup_s)
        if "policies" not in overrides:
            config.policies = default_policy_set(main.min_replicas,
                                                 main.max_replicas)
    faults = overrides.pop("faults", None)
    if faults is not None:
        config.fault_schedule = faults
    for key, value in overrides.items():
        setattr(config, key, value)
    if config.duration_s <= config.warmup_s:
        raise ConfigError("duration_s: must be greater than warmup_s")
    try:
        config.validate()
    except Exception as exc:
        raise ConfigError(str(exc)) from exc
    return config


def _parse_service(index: int, raw: dict) -> ServiceSpec:
    _check_keys(raw, _SERVICE_KEYS, f"services[{index}]")
    if "name" not in raw:
        raise ConfigError(f"services[{index}]: missing name")
    defaults = asdict(default_service())
    defaults.update(raw)
    return ServiceSpec(**defaults)


def _parse_workload(raw: dict) -> WorkloadProfile:
    _check_keys(raw, _WORKLOAD_KEYS, "workload")
    raw = dict(raw)
    if "script" in raw:
        raw["script"] = tuple(tuple(seg) for seg in raw["script"])
    return WorkloadProfile(**raw)


def _parse_slo(raw) -> SloSpec:
    if isinstance(raw, str):
        if raw not in SLO_PRESETS:
            raise ConfigError(f"slo: unknown preset {raw!r}")
        return SLO_PRESETS[raw]
    _check_keys(raw, _SLO_KEYS, "slo")
    base = asdict(SLO_PRESETS["standard"])
    base.update(raw)
    return SloSpec(**base)


def _parse_policies(raw: list) -> PolicySet:
    rules = []
    for i, entry in enumerate(raw):
        _check_keys(entry, _RULE_KEYS, f"policies[{i}]")
        rules.append(PolicyRule(id=entry["id"], kind=entry["kind"],
                                params=entry.get("params", {})))
    return PolicySet(rules=tuple(rules))


def _parse_fault(index: int, raw: dict) -> FaultEvent:
    _check_keys(raw, _FAULT_KEYS, f"faults[{index}]")
    try:
        kind = FaultKind(raw["kind"])
    except (KeyError, ValueError):
        raise ConfigError(f"faults[{index}]: invalid kind")
    return FaultEvent(kind=kind, target_service=raw.get("service", "web"),
                      at_s=int(raw["at_s"]), magnitude=raw["magnitude"],
                      duration_s=raw.get("duration_s"))
