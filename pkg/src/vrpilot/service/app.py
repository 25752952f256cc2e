"""FastAPI service wrapping the repair pipeline.

Campaigns run as jobs in a per-app registry; ``wait=true`` blocks the
request until the campaign finishes, otherwise poll GET /campaigns/{id}.
"""

from __future__ import annotations

import shutil
import tempfile
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import ConfigurationError, VRpilotError
from ..gateway import OpenAIChatBackend, RecordingBackend, ReplayBackend, ScriptedBackend, load_session
from ..orchestrator import run_campaign
from ..patching import apply_patch, read_span, remove_workspace, stage_workspace
from ..prompting import (
    build_codexvr_prompt,
    build_cot_answer_prompt,
    build_cot_reasoning_prompt,
    build_task_text,
)
from ..reporting import (
    ReportSink,
    compute_metrics,
    export_results,
    export_review_bundle,
    format_report,
    load_rows,
    rows_from_results,
)
from ..tasks import DEFAULT_SYSTEM_MESSAGE, PROMPT_MODE_VRPILOT, config_from_dict, load_manifest, validate_task
from ..validation import validate
from .schemas import (
    AttemptRowsResponse,
    CampaignRequest,
    CampaignStatus,
    GatewaySpec,
    HealthResponse,
    PromptRequest,
    PromptResponse,
    ReportRequest,
    ReportResponse,
    StageResultModel,
    ValidationRequest,
    ValidationResponse,
)

ANSWER_STAGE_REASONING_FILLER = "<reasoning>"


@dataclass
class CampaignJob:
    id: str
    status: str = "running"
    report: dict | None = None
    error: str | None = None
    out_dir: str | None = None
    transcript_digest: str | None = None
    sink: ReportSink = field(default_factory=ReportSink)
    rows: list[dict] = field(default_factory=list)


class JobRegistry:
    def __init__(self):
        self._lock = threading.Lock()
        self._jobs: dict[str, CampaignJob] = {}

    def create(self) -> CampaignJob:
        job = CampaignJob(id=uuid.uuid4().hex[:12])
        with self._lock:
            self._jobs[job.id] = job
        return job

    def get(self, job_id: str) -> CampaignJob | None:
        with self._lock:
            return self._jobs.get(job_id)


def _find_task(manifest_path: str, task_id: str):
    tasks = load_manifest(manifest_path)
    for task in tasks:
        if task.id == task_id:
            return task, tasks
    raise HTTPException(status_code=404, detail=f"task id not found in manifest: {task_id}")


def build_gateway(spec: GatewaySpec):
    """Return (backend, recorder); recorder is set when record_path is given."""
    if spec.kind == "replay":
        if not spec.transcript_path:
            raise ConfigurationError("replay gateway requires transcript_path")
        backend = ReplayBackend(load_session(spec.transcript_path))
    elif spec.kind == "scripted":
        backend = ScriptedBackend(spec.scripted_contents, cycle=spec.scripted_cycle)
    else:
        backend = OpenAIChatBackend(**({"base_url": spec.base_url} if spec.base_url else {}))
    recorder = None
    if spec.record_path:
        recorder = RecordingBackend(backend)
        backend = recorder
    return backend, recorder


def _status(job: CampaignJob) -> CampaignStatus:
    return CampaignStatus(
        id=job.id,
        status=job.status,
        report=job.report,
        error=job.error,
        out_dir=job.out_dir,
        transcript_digest=job.transcript_digest,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="vrpilot", version=__version__)
    app.state.jobs = JobRegistry()

    @app.exception_handler(VRpilotError)
    async def _domain_error(_request: Request, exc: VRpilotError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(version=__version__)

    @app.post("/prompts", response_model=PromptResponse)
    def render_prompt(req: PromptRequest) -> PromptResponse:
        task, _ = _find_task(req.manifest_path, req.task_id)
        source = read_span(task.project_root / task.vulnerable_file, task.function_span)
        if req.mode == PROMPT_MODE_VRPILOT:
            reasoning_prompt = build_cot_reasoning_prompt(
                build_task_text(task, source), system=DEFAULT_SYSTEM_MESSAGE
            )
            if req.stage == "reasoning":
                bundle = reasoning_prompt
            else:
                filler = req.reasoning if req.reasoning is not None else ANSWER_STAGE_REASONING_FILLER
                bundle = build_cot_answer_prompt(reasoning_prompt, filler)
        else:
            # Baseline prompts are single-stage; the stage field is ignored.
            bundle = build_codexvr_prompt(req.mode, task, source, system=DEFAULT_SYSTEM_MESSAGE)
        return PromptResponse(text=bundle.text, kind=bundle.kind, digest=bundle.digest(), system=bundle.system)

    @app.post("/validations", response_model=ValidationResponse)
    def run_validation(req: ValidationRequest) -> ValidationResponse:
        task, _ = _find_task(req.manifest_path, req.task_id)
        violations = validate_task(task)
        if violations:
            raise HTTPException(status_code=400, detail="; ".join(violations))
        if req.patch_path and req.patch_text is not None:
            raise HTTPException(status_code=400, detail="give patch_path or patch_text, not both")
        scratch = Path(req.scratch_dir) if req.scratch_dir else Path(tempfile.mkdtemp(prefix="vrpilot-"))
        owns_scratch = req.scratch_dir is None
        workspace = stage_workspace(task, 0, scratch)
        try:
            if req.patch_path:
                code = Path(req.patch_path).read_text(encoding="utf-8")
                apply_patch(workspace, task, code)
            elif req.patch_text is not None:
                apply_patch(workspace, task, req.patch_text)
            outcome = validate(workspace, task)
        finally:
            if not req.keep_workspace:
                remove_workspace(workspace)
                if owns_scratch:
                    shutil.rmtree(scratch, ignore_errors=True)
        return ValidationResponse(
            task_id=task.id,
            classification=outcome.classification,
            plausible=outcome.plausible,
            stages=[StageResultModel(**vars(stage)) for stage in outcome.stages],
            workspace=str(workspace.root) if req.keep_workspace else None,
        )

    @app.post("/campaigns", response_model=CampaignStatus)
    def start_campaign(req: CampaignRequest) -> CampaignStatus:
        tasks = load_manifest(req.manifest_path)
        if not tasks:
            raise HTTPException(status_code=400, detail="manifest contains no tasks")
        config = config_from_dict(req.config)
        gateway, recorder = build_gateway(req.gateway)
        job = app.state.jobs.create()
        job.out_dir = req.out_dir

        def execute() -> None:
            scratch = Path(req.scratch_dir) if req.scratch_dir else Path(tempfile.mkdtemp(prefix="vrpilot-"))
            started = time.monotonic()
            try:
                results = run_campaign(
                    tasks,
                    config,
                    gateway,
                    scratch,
                    parallelism=req.parallelism,
                    on_attempt=job.sink.append,
                    keep_workspaces=req.keep_workspaces,
                )
                rows = rows_from_results(results)
                task_errors = [(r.task_id, r.error) for r in results if r.error]
                report = compute_metrics(
                    rows, config, wall_clock_seconds=time.monotonic() - started, task_errors=task_errors
                )
                if recorder and req.gateway.record_path:
                    recorder.save(req.gateway.record_path)
                if req.out_dir:
                    export_results(report, rows, Path(req.out_dir), force=req.force)
                    export_review_bundle(results, tasks, Path(req.out_dir) / "review", force=req.force)
                job.rows = rows
                job.report = report.to_dict()
                job.transcript_digest = recorder.transcript.digest() if recorder else None
                job.status = "completed"
            except Exception as exc:  # campaign jobs must not take the app down
                job.error = str(exc)
                job.status = "failed"
            finally:
                if req.scratch_dir is None and not req.keep_workspaces:
                    shutil.rmtree(scratch, ignore_errors=True)

        if req.wait:
            execute()
        else:
            threading.Thread(target=execute, daemon=True).start()
        return _status(job)

    @app.get("/campaigns/{job_id}", response_model=CampaignStatus)
    def campaign_status(job_id: str) -> CampaignStatus:
        job = app.state.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"no such campaign: {job_id}")
        return _status(job)

    @app.get("/campaigns/{job_id}/attempts", response_model=AttemptRowsResponse)
    def campaign_attempts(job_id: str) -> AttemptRowsResponse:
        job = app.state.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"no such campaign: {job_id}")
        rows = job.rows if job.status == "completed" else job.sink.rows
        return AttemptRowsResponse(id=job.id, rows=rows)

    @app.post("/reports", response_model=ReportResponse)
    def recompute_report(req: ReportRequest) -> ReportResponse:
        report = compute_metrics(load_rows(Path(req.in_dir)))
        return ReportResponse(report=report.to_dict(), formatted=format_report(report))

    return app
