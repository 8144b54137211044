"""HTTP service over the controller: runs as background jobs, everything
else synchronous.

A run can take minutes (real executors shell out per step), so POST /runs
returns a job id immediately and the job advances in a worker thread.
Cancellation is cooperative: DELETE sets a flag the run loop polls between
steps, which leaves the last checkpoint valid for a later resume. Replay,
audit, and ablation are quick enough to answer in-request.

No steering endpoints exist on purpose: a run's decisions come from the
policy alone, and the only inputs are the config at start and the
workspace the executors mutate.
"""
from __future__ import annotations

import asyncio
import threading
import uuid
from pathlib import Path
from typing import Any, Optional

import httpx
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .ablation import AblationSpec, run_ablation_spec
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .controller import AblationSwitches
from .ledger import Ledger, LedgerError, audit_claims
from .orchestrator import (
    ReplayReport,
    ResumeError,
    RunResult,
    replay,
    resume,
    run,
    trace_path,
)

__all__ = ["create_app", "JobRegistry", "SyncASGITransport"]


class SyncASGITransport(httpx.BaseTransport):
    """Serve an ASGI app to a synchronous httpx.Client.

    httpx's own ASGITransport is async-only; this adapter drains the sync
    request body, replays it through that transport on a private event
    loop, and reads the response inside the same loop. One loop per
    request is cheap at CLI call rates.
    """

    def __init__(self, app: Any) -> None:
        self._async = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        body = request.read()
        async_request = httpx.Request(
            request.method,
            request.url,
            headers=request.headers,
            content=body,
        )

        async def roundtrip() -> tuple[int, httpx.Headers, bytes]:
            response = await self._async.handle_async_request(async_request)
            content = await response.aread()
            await response.aclose()
            return response.status_code, response.headers, content

        status, headers, content = asyncio.run(roundtrip())
        return httpx.Response(status, headers=headers, content=content)


class RunRequest(BaseModel):
    """Start a run. Exactly one of config (inline dict) or config_path."""

    config: Optional[dict[str, Any]] = None
    config_path: Optional[str] = None
    overrides: Optional[dict[str, Any]] = None
    switches: dict[str, bool] = Field(default_factory=dict)
    max_transitions: Optional[int] = None


class ResumeRequest(BaseModel):
    config: Optional[dict[str, Any]] = None
    config_path: Optional[str] = None
    overrides: Optional[dict[str, Any]] = None
    checkpoint: str
    switches: dict[str, bool] = Field(default_factory=dict)


class ReplayRequest(BaseModel):
    config: Optional[dict[str, Any]] = None
    config_path: Optional[str] = None
    overrides: Optional[dict[str, Any]] = None
    trace: Optional[str] = None


class AuditRequest(BaseModel):
    workspace_root: str
    ledger: str = "grounding.json"
    run_commands: bool = False
    timeout: float = 30.0


class AblateRequest(BaseModel):
    spec_path: str


class JobInfo(BaseModel):
    run_id: str
    status: str
    workspace_root: str
    steps_executed: int = 0
    violations: int = 0
    error: Optional[str] = None
    summary: Optional[dict[str, Any]] = None


class ReplayResponse(BaseModel):
    checked: int
    diverged: bool
    step: Optional[int] = None
    field: Optional[str] = None
    expected: Any = None
    actual: Any = None


class AuditResponse(BaseModel):
    ok: bool
    counts: dict[str, int]
    total_claims: int
    orphan_count: int
    violations: list[dict[str, Any]]


class _Job:
    def __init__(self, run_id: str, cfg: RunConfig) -> None:
        self.run_id = run_id
        self.cfg = cfg
        self.status = "queued"
        self.result: Optional[RunResult] = None
        self.error: Optional[str] = None
        self.stop_event = threading.Event()
        self.thread: Optional[threading.Thread] = None

    def info(self) -> JobInfo:
        steps = len(self.result.trace) if self.result else 0
        violations = len(self.result.violations) if self.result else 0
        summary = None
        if self.result is not None and self.status in ("completed", "cancelled"):
            summary = self.result.summary()
        return JobInfo(
            run_id=self.run_id,
            status=self.status,
            workspace_root=str(self.cfg.root),
            steps_executed=steps,
            violations=violations,
            error=self.error,
            summary=summary,
        )


class JobRegistry:
    """In-process registry of run jobs, keyed by id. Thread-safe enough
    for one service process; jobs are not persisted (the workspace's own
    trace and checkpoints are the durable record)."""

    def __init__(self) -> None:
        self._jobs: dict[str, _Job] = {}
        self._lock = threading.Lock()

    def create(self, cfg: RunConfig) -> _Job:
        run_id = uuid.uuid4().hex[:12]
        job = _Job(run_id, cfg)
        with self._lock:
            self._jobs[run_id] = job
        return job

    def get(self, run_id: str) -> _Job:
        with self._lock:
            job = self._jobs.get(run_id)
        if job is None:
            raise KeyError(run_id)
        return job

    def all(self) -> list[_Job]:
        with self._lock:
            return list(self._jobs.values())


def _build_config(
    inline: Optional[dict[str, Any]],
    path: Optional[str],
    overrides: Optional[dict[str, Any]],
) -> RunConfig:
    if (inline is None) == (path is None):
        raise HTTPException(
            status_code=422, detail="provide exactly one of config, config_path"
        )
    try:
        if inline is not None:
            return config_from_dict(inline, overrides)
        return load_config(path, overrides)
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    except FileNotFoundError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc


def _switches(flags: dict[str, bool]) -> AblationSwitches:
    valid = set(AblationSwitches().as_dict())
    unknown = set(flags) - valid
    if unknown:
        raise HTTPException(
            status_code=422, detail=f"unknown switches: {sorted(unknown)}"
        )
    return AblationSwitches(**flags)


def create_app(registry: Optional[JobRegistry] = None) -> FastAPI:
    app = FastAPI(title="cesm", version="0.1.0")
    jobs = registry if registry is not None else JobRegistry()
    app.state.jobs = jobs

    def _launch(job: _Job, target) -> None:
        def body() -> None:
            job.status = "running"
            try:
                job.result = target()
            except Exception as exc:  # noqa: BLE001 - job boundary
                job.status = "failed"
                job.error = f"{type(exc).__name__}: {exc}"
                return
            job.status = "cancelled" if job.stop_event.is_set() else "completed"

        job.thread = threading.Thread(target=body, daemon=True)
        job.thread.start()

    @app.post("/runs", response_model=JobInfo, status_code=202)
    def start_run(req: RunRequest) -> JobInfo:
        cfg = _build_config(req.config, req.config_path, req.overrides)
        switches = _switches(req.switches)
        job = jobs.create(cfg)
        _launch(
            job,
            lambda: run(
                cfg,
                switches=switches,
                max_transitions=req.max_transitions,
                should_stop=job.stop_event.is_set,
            ),
        )
        return job.info()

    @app.get("/runs", response_model=list[JobInfo])
    def list_runs() -> list[JobInfo]:
        return [job.info() for job in jobs.all()]

    @app.get("/runs/{run_id}", response_model=JobInfo)
    def get_run(run_id: str) -> JobInfo:
        try:
            return jobs.get(run_id).info()
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no run {run_id}") from None

    @app.get("/runs/{run_id}/trace")
    def get_trace(run_id: str) -> list[dict[str, Any]]:
        try:
            job = jobs.get(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no run {run_id}") from None
        if job.result is not None:
            return job.result.trace
        tp = trace_path(job.cfg.root)
        if tp.is_file():
            from .orchestrator import load_trace

            return load_trace(tp)
        return []

    @app.delete("/runs/{run_id}", response_model=JobInfo)
    def cancel_run(run_id: str) -> JobInfo:
        try:
            job = jobs.get(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no run {run_id}") from None
        job.stop_event.set()
        if job.thread is not None:
            job.thread.join(timeout=60)
        return job.info()

    @app.post("/resume", response_model=JobInfo, status_code=202)
    def resume_run(req: ResumeRequest) -> JobInfo:
        cfg = _build_config(req.config, req.config_path, req.overrides)
        switches = _switches(req.switches)
        checkpoint = Path(req.checkpoint)
        if not checkpoint.is_absolute():
            checkpoint = cfg.root / checkpoint
        job = jobs.create(cfg)

        def target() -> RunResult:
            try:
                return resume(
                    cfg,
                    checkpoint,
                    switches=switches,
                    should_stop=job.stop_event.is_set,
                )
            except ResumeError as exc:
                raise RuntimeError(str(exc)) from exc

        _launch(job, target)
        return job.info()

    @app.post("/replay", response_model=ReplayResponse)
    def replay_trace(req: ReplayRequest) -> ReplayResponse:
        cfg = _build_config(req.config, req.config_path, req.overrides)
        tp = Path(req.trace) if req.trace else trace_path(cfg.root)
        if not tp.is_absolute():
            tp = cfg.root / tp
        if not tp.is_file():
            raise HTTPException(status_code=404, detail=f"trace not found: {tp}")
        report: ReplayReport = replay(tp, cfg)
        return ReplayResponse(**report.to_dict())

    @app.post("/ledger/audit", response_model=AuditResponse)
    def ledger_audit(req: AuditRequest) -> AuditResponse:
        root = Path(req.workspace_root)
        if not root.is_dir():
            raise HTTPException(status_code=404, detail=f"no workspace at {root}")
        ledger_file = root / req.ledger
        if not ledger_file.is_file():
            raise HTTPException(status_code=404, detail=f"no ledger at {ledger_file}")
        try:
            ledger = Ledger.load(ledger_file)
        except LedgerError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        report = audit_claims(
            ledger, root, run_commands=req.run_commands, timeout=req.timeout
        )
        return AuditResponse(
            ok=report.ok,
            counts=dict(report.counts),
            total_claims=report.total_claims,
            orphan_count=report.orphan_count,
            violations=[dict(v) for v in report.violations],
        )

    @app.post("/ablate")
    def ablate(req: AblateRequest) -> dict[str, Any]:
        spec_path = Path(req.spec_path)
        if not spec_path.is_file():
            raise HTTPException(status_code=404, detail=f"no spec at {spec_path}")
        try:
            spec = AblationSpec.load(spec_path)
        except (ValueError, KeyError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return run_ablation_spec(spec)

    return app
