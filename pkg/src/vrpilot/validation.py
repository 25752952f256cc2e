"""Three-stage patch validation: compile, functional tests, security tests.

Stages run in that order inside the staged workspace and short-circuit on
the first failure. Pass/fail is exit-code based; logs are captured verbatim
up to a configurable byte cap.
"""

from __future__ import annotations

import os
import subprocess
import time
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .patching import Workspace
from .tasks import RepairTask

STAGE_COMPILE = "compile"
STAGE_FUNCTIONAL = "functional"
STAGE_SECURITY = "security"

CLASS_COMPILE_ERROR = "compile_error"
CLASS_FUNCTIONAL_FAIL = "functional_fail"
CLASS_SECURITY_FAIL = "security_fail"
CLASS_PLAUSIBLE = "plausible"

DEFAULT_OUTPUT_CAP = 1024 * 1024  # bytes per stream
TRUNCATION_MARKER = "\n...[output truncated]"


@dataclass(frozen=True)
class StageResult:
    stage: str
    passed: bool
    exit_code: int
    stdout: str
    stderr: str
    duration_ms: int
    timed_out: bool = False


@dataclass(frozen=True)
class ValidationOutcome:
    classification: str
    stages: list[StageResult] = field(default_factory=list)

    @property
    def plausible(self) -> bool:
        return self.classification == CLASS_PLAUSIBLE


def _capped(raw: bytes | None, cap: int) -> str:
    raw = raw or b""
    if len(raw) <= cap:
        return raw.decode("utf-8", errors="replace")
    return raw[:cap].decode("utf-8", errors="replace") + TRUNCATION_MARKER


def substitute_command(command: str, workspace: Workspace) -> str:
    return command.replace("{workspace}", str(workspace.root))


def run_stage(
    command: str,
    workspace: Workspace,
    timeout_seconds: int,
    stage: str,
    env: dict[str, str] | None = None,
    output_cap: int = DEFAULT_OUTPUT_CAP,
) -> StageResult:
    """Run one shell command with cwd at the workspace root.

    A command that cannot be spawned at all is a configuration error, not a
    stage failure; a nonzero exit or a timeout is a stage failure.
    """
    if not command or not command.strip():
        raise ConfigurationError(f"empty command for {stage} stage")
    resolved = substitute_command(command, workspace)
    merged_env = dict(os.environ)
    if env:
        merged_env.update(env)
    started = time.monotonic()
    try:
        proc = subprocess.run(
            resolved,
            shell=True,
            cwd=workspace.root,
            env=merged_env,
            capture_output=True,
            timeout=timeout_seconds,
        )
        stdout, stderr, exit_code, timed_out = proc.stdout, proc.stderr, proc.returncode, False
    except subprocess.TimeoutExpired as exc:
        stdout, stderr, exit_code, timed_out = exc.stdout, exc.stderr, -1, True
    except OSError as exc:
        raise ConfigurationError(f"failed to spawn {stage} command {resolved!r}: {exc}") from exc
    duration_ms = int((time.monotonic() - started) * 1000)
    return StageResult(
        stage=stage,
        passed=(exit_code == 0 and not timed_out),
        exit_code=exit_code,
        stdout=_capped(stdout, output_cap),
        stderr=_capped(stderr, output_cap),
        duration_ms=duration_ms,
        timed_out=timed_out,
    )


def validate(
    workspace: Workspace,
    task: RepairTask,
    output_cap: int = DEFAULT_OUTPUT_CAP,
) -> ValidationOutcome:
    """Classify an already-patched workspace.

    compile -> functional -> security; a stage runs only if all prior stages
    passed, and the classification names the first failing stage (or
    ``plausible`` when all three pass).
    """
    stages: list[StageResult] = []

    compile_result = run_stage(
        task.build_command, workspace, task.timeout_seconds, STAGE_COMPILE,
        env=task.env, output_cap=output_cap,
    )
    stages.append(compile_result)
    if not compile_result.passed:
        return ValidationOutcome(CLASS_COMPILE_ERROR, stages)

    functional_result = run_stage(
        task.functional_test_command, workspace, task.timeout_seconds, STAGE_FUNCTIONAL,
        env=task.env, output_cap=output_cap,
    )
    stages.append(functional_result)
    if not functional_result.passed:
        return ValidationOutcome(CLASS_FUNCTIONAL_FAIL, stages)

    security_result = run_stage(
        task.security_test_command, workspace, task.timeout_seconds, STAGE_SECURITY,
        env=task.env, output_cap=output_cap,
    )
    stages.append(security_result)
    if not security_result.passed:
        return ValidationOutcome(CLASS_SECURITY_FAIL, stages)

    return ValidationOutcome(CLASS_PLAUSIBLE, stages)
