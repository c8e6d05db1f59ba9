"""HTTP + server-sent-events API for interactive (serve) mode.

One engine thread advances simulated time at a configurable real-time
factor; API handlers interact with it only through a serialized command
queue (mutations) and lock-protected snapshots (reads)."""

from __future__ import annotations

import json
import queue
import threading
import time
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import FileResponse, StreamingResponse
from pydantic import BaseModel

from . import control
from .cli import ENGINE_VERSION
from .engine import Engine, EngineConfig
from .simcluster import FaultEvent, FaultKind, SimError
from .evalstats import TrialConfig

EVENT_POLL_S = 0.1


class EngineRunner:
    """Owns the engine thread, the command queue, and read snapshots."""

    def __init__(self, config: TrialConfig, realtime_factor: float = 10.0):
        engine_config = EngineConfig(
            mode=config.mode, services=config.services,
            workload=config.workload, fault_schedule=config.fault_schedule,
            slo=config.slo, policies=config.policies,
            duration_s=config.duration_s, warmup_s=config.warmup_s,
            anomaly_threshold=config.anomaly_threshold,
            approval_timeout_s=config.approval_timeout_s,
            timeout_decision=config.timeout_decision,
            noise_sigma=config.noise_sigma)
        self.engine = Engine(engine_config, seed=config.seed)
        self.realtime_factor = realtime_factor
        self.commands: queue.Queue = queue.Queue()
        self.lock = threading.Lock()
        self.stop_event = threading.Event()
        self.thread = threading.Thread(target=self._loop, daemon=True)

    def start(self) -> None:
        self.thread.start()

    def stop(self) -> None:
        self.stop_event.set()

    def _loop(self) -> None:
        tick_wall = 1.0 / max(self.realtime_factor, 1e-6)
        while not self.stop_event.is_set() \
                and self.engine.state.clock_s < self.engine.config.duration_s:
            started = time.monotonic()
            with self.lock:
                self._drain_commands()
                self.engine.tick()
            remaining = tick_wall - (time.monotonic() - started)
            if remaining > 0:
                time.sleep(remaining)

    def _drain_commands(self) -> None:
        while True:
            try:
                fn, result_box = self.commands.get_nowait()
            except queue.Empty:
                return
            try:
                result_box["result"] = fn(self.engine)
            except Exception as exc:  # surfaced to the posting handler
                result_box["error"] = exc
            finally:
                result_box["done"].set()

    def submit(self, fn):
        """Run fn(engine) between ticks and wait for its result."""
        box = {"done": threading.Event()}
        self.commands.put((fn, box))
        box["done"].wait(timeout=10.0)
        if "error" in box:
            raise box["error"]
        return box.get("result")

    def snapshot(self, fn):
        with self.lock:
            return fn(self.engine)


class ApprovalDecision(BaseModel):
    decision: str  # approve | deny


class FaultRequest(BaseModel):
    kind: str
    service: str
    magnitude: float
    duration_s: Optional[int] = None


def create_app(runner: EngineRunner,
               frontend_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="opsloop", version=ENGINE_VERSION)

    @app.get("/version")
    def version():
        return {"version": ENGINE_VERSION, "api": 1}

    @app.get("/state")
    def state():
        return runner.snapshot(lambda e: {
            "mode": e.mode, "clock_s": e.state.clock_s,
            **e.state.summary()})

    @app.get("/metrics")
    def metrics(window: int = 600, metric: str = "p95_latency_ms",
                service: str = ""):
        def read(e):
            clock = e.state.clock_s
            services = [service] if service else sorted(e.state.services)
            out = {}
            for svc in services:
                pts = e.store.query_window(
                    metric, {"service": svc, "mode": e.mode},
                    max(0, clock - window), clock)
                out[svc] = [[ts, v] for ts, v in pts]
            return {"metric": metric, "series": out}
        return runner.snapshot(read)

    @app.get("/approvals")
    def approvals():
        def read(e):
            return [{
                "action_id": a.id, "service": a.proposal.service,
                "kind": a.proposal.kind.value, "risk": a.proposal.risk,
                "created_ts": a.approval.created_ts,
                "deadline_ts": a.approval.deadline_ts,
            } for a in e.gate.pending()]
        return runner.snapshot(read)

    @app.post("/approvals/{action_id}")
    def decide(action_id: str, body: ApprovalDecision):
        if body.decision not in ("approve", "deny"):
            raise HTTPException(400, detail="decision must be approve or deny")

        def apply(e):
            try:
                action = e.gate.by_id(action_id)
            except control.PolicyError:
                raise HTTPException(404, detail=f"unknown action {action_id}")
            if action.status != control.ActionStatus.PENDING_APPROVAL:
                raise HTTPException(
                    409, detail=f"action already {action.status.value}")
            e.gate.decide(action_id, body.decision, e.state.clock_s,
                          decided_by="operator")
            return {"action_id": action_id, "decision": body.decision}
        return runner.submit(apply)

    @app.post("/faults")
    def inject(body: FaultRequest):
        try:
            kind = FaultKind(body.kind)
        except ValueError:
            raise HTTPException(400, detail=f"unknown fault kind {body.kind!r}")

        def apply(e):
            fault = FaultEvent(kind=kind, target_service=body.service,
                               at_s=e.state.clock_s, magnitude=body.magnitude,
                               duration_s=body.duration_s)
            try:
                e.inject_fault(fault)
            except SimError as exc:
                raise HTTPException(404, detail=str(exc))
            return {"injected": body.kind, "service": body.service,
                    "at_s": e.state.clock_s}
        return runner.submit(apply)

    @app.get("/audit")
    def audit(limit: int = 200):
        def read(e):
            return [{
                "ts": a.ts_s, "seq": a.seq, "actor": a.actor,
                "action": a.action_id, "verdict": a.verdict,
                "rules": a.rules,
            } for a in e.audit.entries[-limit:]]
        return runner.snapshot(read)

    @app.get("/report")
    def report():
        def read(e):
            incidents = e.incidents.incidents
            resolved = [i for i in incidents if i.t_recovered_s is not None]
            mttrs = [i.t_recovered_s - i.t_detected_s for i in resolved
                     if i.t_detected_s is not None]
            return {
                "clock_s": e.state.clock_s,
                "incidents_total": len(incidents),
                "incidents_resolved": len(resolved),
                "mean_mttr_s": (sum(mttrs) / len(mttrs)) if mttrs else None,
                "violations": len(e.violations),
                "actions_executed": sum(
                    1 for a in e.gate.actions
                    if a.status == control.ActionStatus.EXECUTED),
                "incidents": [{
                    "id": i.id, "service": i.service,
                    "fault_kind": i.fault_kind,
                    "t_injected_s": i.t_injected_s,
                    "t_detected_s": i.t_detected_s,
                    "t_recovered_s": i.t_recovered_s,
                } for i in incidents],
            }
        return runner.snapshot(read)

    @app.get("/events")
    async def events(request: Request, after_seq: int = 0):
        def stream():
            cursor = after_seq
            while True:
                batch = runner.snapshot(lambda e: e.bus.since(cursor))
                for event in batch:
                    cursor = event.seq
                    payload = json.dumps(
                        {"seq": event.seq, "ts_s": event.ts_s,
                         "kind": event.kind, "payload": event.payload},
                        sort_keys=True)
                    yield f"id: {event.seq}\ndata: {payload}\n\n"
                if runner.stop_event.is_set():
                    return
                time.sleep(EVENT_POLL_S)
        return StreamingResponse(stream(), media_type="text/event-stream")

    if frontend_dir and Path(frontend_dir).is_dir():
        root = Path(frontend_dir)

        @app.get("/")
        def index():
            return FileResponse(root / "index.html")

        @app.get("/assets/{name}")
        def assets(name: str):
            target = (root / name).resolve()
            if not str(target).startswith(str(root.resolve())) \
                    or not target.is_file():
                raise HTTPException(404)
            return FileResponse(target)

    return app


def default_frontend_dir() -> Optional[str]:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return str(candidate) if candidate.is_dir() else None


def serve(config: TrialConfig, port: int = 8000,
          realtime_factor: float = 10.0) -> None:
    import uvicorn

    runner = EngineRunner(config, realtime_factor=realtime_factor)
    app = create_app(runner, frontend_dir=default_frontend_dir())
    runner.start()
    try:
        uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
    finally:
        runner.stop()
