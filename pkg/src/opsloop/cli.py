"""Command-line entry point: batch runs, A/B comparisons, the scenario
suite, report re-rendering, and the interactive serve mode."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from .config import ConfigError, load_config
from .evalstats import (StatsError, canonical_json, run_comparison,
                        run_trial)
from .scenarios import SCENARIOS, build_trial_config, scenario_config_factory
from .telemetry import export_jsonl

ENGINE_VERSION = "0.1.0"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opsloop",
        description="Closed-loop cluster remediation engine and A/B evaluator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--scenario", choices=sorted(SCENARIOS), default="S2")
        p.add_argument("--out", type=str, default="out")

    p_run = sub.add_parser("run", help="single trial")
    common(p_run)
    p_run.add_argument("--mode", choices=["baseline", "cpe"], default="cpe")

    p_cmp = sub.add_parser("compare", help="K baseline/cpe trial pairs")
    common(p_cmp)
    p_cmp.add_argument("--trials", type=int, default=5)

    p_suite = sub.add_parser("suite", help="scenario suite S1-S4")
    common(p_suite)
    p_suite.add_argument("--trials", type=int, default=5)

    p_rep = sub.add_parser("report", help="re-render stored results")
    p_rep.add_argument("--out", type=str, default="out")
    p_rep.add_argument("path", type=str)

    p_srv = sub.add_parser("serve", help="interactive engine + API")
    common(p_srv)
    p_srv.add_argument("--mode", choices=["baseline", "cpe"], default="cpe")
    p_srv.add_argument("--port", type=int, default=8000)
    p_srv.add_argument("--realtime-factor", type=float, default=10.0)
    return parser


def _config_for(args, mode: str, seed: int, batch: bool = True):
    if args.config:
        return load_config(args.config, mode=mode, seed=seed)
    return build_trial_config(SCENARIOS[args.scenario], mode, seed,
                              batch=batch)


def _manifest(command: str, args, outputs: dict, start: float) -> dict:
    digest = ""
    if getattr(args, "config", None):
        digest = hashlib.sha256(Path(args.config).read_bytes()).hexdigest()[:16]
    return {
        "command": command,
        "config_path": getattr(args, "config", None),
        "config_digest": digest,
        "seed": args.seed,
        "scenario": getattr(args, "scenario", None),
        "engine_version": ENGINE_VERSION,
        "artifacts": outputs,
        "wall_time_s": round(time.time() - start, 3),
    }


def _write(out_dir: Path, name: str, text: str) -> str:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def render_table(doc: dict) -> str:
    """Human-readable summary mirroring the headline metric rows."""
    rows = [
        ("MTTR (s)", doc["mean_mttr_baseline_s"], doc["mean_mttr_cpe_s"],
         doc["delta_mttr_pct"]),
        ("RPS/vCPU", doc["re_baseline"], doc["re_cpe"], doc["delta_re_pct"]),
        ("Policy Violations (/hr)", doc["violations_baseline_per_hr"],
         doc["violations_cpe_per_hr"], doc["delta_violations_pct"]),
    ]
    lines = [f"Scenario {doc['scenario_id']}  "
             f"(K={doc['trials_per_arm']}, seed={doc['base_seed']}, "
             f"paired incidents={doc['paired_incidents']})",
             f"{'Metric':<26}{'Baseline':>12}{'CPE':>12}{'Gain %':>10}"]
    for name, base, cpe, gain in rows:
        lines.append(f"{name:<26}{base:>12.2f}{cpe:>12.2f}{gain:>10.1f}")
    lines.append(f"Mann-Whitney U={doc['mwu_u']:.1f}  p={doc['mwu_p']:.2e}  "
                 f"Cliff's delta={doc['cliffs_delta']:.3f}")
    lines.append(f"MTTR delta 95% CI: [{doc['mttr_ci_pct'][0]:.1f}, "
                 f"{doc['mttr_ci_pct'][1]:.1f}]%")
    return "\n".join(lines) + "\n"


def cmd_run(args) -> int:
    start = time.time()
    config = _config_for(args, args.mode, args.seed, batch=False)
    result, engine = run_trial(config, return_engine=True)
    out = Path(args.out)
    paths = {
        "result": _write(out, "trial_result.json", result.to_json()),
    }
    telemetry_path = out / "telemetry.jsonl"
    export_jsonl(engine.store, str(telemetry_path))
    paths["telemetry"] = str(telemetry_path)
    audit_doc = "".join(
        json.dumps({"ts": e.ts_s, "seq": e.seq, "actor": e.actor,
                    "action": e.action_id, "verdict": e.verdict,
                    "rules": e.rules}, sort_keys=True) + "\n"
        for e in engine.audit.entries)
    paths["audit"] = _write(out, "audit.jsonl", audit_doc)
    paths["manifest"] = _write(out, "manifest.json", canonical_json(
        _manifest("run", args, paths, start)))
    print(f"trial complete: {paths['result']}")
    return EXIT_OK


def cmd_compare(args) -> int:
    start = time.time()
    if args.config:
        def make_config(mode, seed):
            return load_config(args.config, mode=mode, seed=seed)
        scenario_id = load_config(args.config).scenario_id
    else:
        make_config = scenario_config_factory(args.scenario)
        scenario_id = args.scenario
    report = run_comparison(make_config, k=args.trials, base_seed=args.seed,
                            scenario_id=scenario_id)
    doc = report.to_doc()
    out = Path(args.out)
    paths = {
        "report": _write(out, "comparison.json", report.to_json()),
        "summary": _write(out, "summary.txt", render_table(doc)),
    }
    paths["manifest"] = _write(out, "manifest.json", canonical_json(
        _manifest("compare", args, paths, start)))
    print(render_table(doc), end="")
    return EXIT_OK


def cmd_suite(args) -> int:
    start = time.time()
    out = Path(args.out)
    paths = {}
    for sid in sorted(SCENARIOS):
        report = run_comparison(scenario_config_factory(sid), k=args.trials,
                                base_seed=args.seed, scenario_id=sid)
        paths[sid] = _write(out, f"comparison_{sid}.json", report.to_json())
        print(render_table(report.to_doc()))
    paths["manifest"] = _write(out, "manifest.json", canonical_json(
        _manifest("suite", args, paths, start)))
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.path)
    if not path.exists():
        print(f"error: no such results file {path}", file=sys.stderr)
        return EXIT_USAGE
    doc = json.loads(path.read_text())
    print(render_table(doc), end="")
    return EXIT_OK


def cmd_serve(args) -> int:
    # Imported lazily so batch commands never pull in the HTTP stack.
    from .api import serve
    config = _config_for(args, args.mode, args.seed, batch=False)
    serve(config, port=args.port, realtime_factor=args.realtime_factor)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "compare":
            return cmd_compare(args)
        if args.command == "suite":
            return cmd_suite(args)
        if args.command == "report":
            return cmd_report(args)
        if args.command == "serve":
            return cmd_serve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StatsError as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
