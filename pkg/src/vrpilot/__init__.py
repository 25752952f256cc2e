"""Vulnerability repair with chain-of-thought prompting and validation feedback.

The public surface re-exported here covers the typical embedding use:
load a manifest, configure a run, pick a gateway backend, run the campaign,
and fold the attempt records into a report.
"""

from .errors import (
    ConfigurationError,
    ExtractionError,
    GatewayError,
    ManifestError,
    PromptError,
    ReplayMissError,
    TranscriptParseError,
    VRpilotError,
    WorkspaceError,
)
from .gateway import (
    ChatRequest,
    ChatResponse,
    OpenAIChatBackend,
    RecordingBackend,
    ReplayBackend,
    ScriptedBackend,
    Transcript,
    load_session,
    record_session,
)
from .orchestrator import AttemptRecord, TaskRunResult, repair_task, run_campaign
from .reporting import (
    RunReport,
    TaskMetrics,
    compute_metrics,
    export_results,
    export_review_bundle,
    load_rows,
    rows_from_results,
)
from .tasks import (
    RepairTask,
    RunConfig,
    config_from_dict,
    load_manifest,
    load_run_config,
    validate_task,
)
from .validation import ValidationOutcome, validate

__version__ = "0.1.0"

__all__ = [
    "AttemptRecord",
    "ChatRequest",
    "ChatResponse",
    "ConfigurationError",
    "ExtractionError",
    "GatewayError",
    "ManifestError",
    "OpenAIChatBackend",
    "PromptError",
    "RecordingBackend",
    "RepairTask",
    "ReplayBackend",
    "ReplayMissError",
    "RunConfig",
    "RunReport",
    "ScriptedBackend",
    "TaskMetrics",
    "TaskRunResult",
    "Transcript",
    "TranscriptParseError",
    "VRpilotError",
    "ValidationOutcome",
    "WorkspaceError",
    "compute_metrics",
    "config_from_dict",
    "export_results",
    "export_review_bundle",
    "load_manifest",
    "load_rows",
    "load_run_config",
    "record_session",
    "repair_task",
    "rows_from_results",
    "run_campaign",
    "validate",
    "validate_task",
]
