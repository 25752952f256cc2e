"""Request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class PromptRequest(BaseModel):
    manifest_path: str
    task_id: str
    mode: str = "vrpilot"
    stage: Literal["reasoning", "answer"] = "reasoning"
    # Filler for the answer stage when no model response exists yet.
    reasoning: str | None = None


class PromptResponse(BaseModel):
    text: str
    kind: str
    digest: str
    system: str


class ValidationRequest(BaseModel):
    manifest_path: str
    task_id: str
    patch_path: str | None = None
    patch_text: str | None = None
    scratch_dir: str | None = None
    keep_workspace: bool = False


class StageResultModel(BaseModel):
    stage: str
    passed: bool
    exit_code: int
    stdout: str
    stderr: str
    duration_ms: int
    timed_out: bool


class ValidationResponse(BaseModel):
    task_id: str
    classification: str
    plausible: bool
    stages: list[StageResultModel]
    workspace: str | None = None


class GatewaySpec(BaseModel):
    kind: Literal["live", "replay", "scripted"] = "live"
    transcript_path: str | None = None
    record_path: str | None = None
    base_url: str | None = None
    scripted_contents: list[str] = Field(default_factory=list)
    scripted_cycle: bool = False


class CampaignRequest(BaseModel):
    manifest_path: str
    config: dict = Field(default_factory=dict)
    gateway: GatewaySpec = Field(default_factory=GatewaySpec)
    parallelism: int = 1
    out_dir: str | None = None
    force: bool = False
    scratch_dir: str | None = None
    keep_workspaces: bool = False
    wait: bool = True


class CampaignStatus(BaseModel):
    id: str
    status: Literal["running", "completed", "failed"]
    report: dict | None = None
    error: str | None = None
    out_dir: str | None = None
    transcript_digest: str | None = None


class AttemptRowsResponse(BaseModel):
    id: str
    rows: list[dict]


class ReportRequest(BaseModel):
    in_dir: str


class ReportResponse(BaseModel):
    report: dict
    formatted: str
