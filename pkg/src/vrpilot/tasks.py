"""Repair task model, run configuration, and the JSON manifest loader.

A manifest is a JSON array of task objects whose field names match
:class:`RepairTask` verbatim. Relative paths are resolved against the
directory containing the manifest file.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError, ManifestError

LANGUAGE_HINTS = ("c", "cpp", "java", "other")

DEFAULT_TEMPERATURES = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_FEEDBACK_ITERATIONS = 4
DEFAULT_SYSTEM_MESSAGE = "You are a chatbot for vulnerability repair"
DEFAULT_MODEL_NAME = "gpt-3.5-turbo"
DEFAULT_MAX_TOKENS = 2048

PROMPT_MODE_VRPILOT = "vrpilot"
# Canonical baseline variant ids, matching the CLI's --mode tokens.
BASELINE_VARIANTS = ("n.h", "s.1", "s.2", "c.", "c.a.", "c.n")

_VARIANT_ALIASES = {
    "n.h": "n.h",
    "n.h.": "n.h",
    "s.1": "s.1",
    "s.2": "s.2",
    "c": "c.",
    "c.": "c.",
    "c.a": "c.a.",
    "c.a.": "c.a.",
    "c.n": "c.n",
    "c.n.": "c.n",
}


def normalize_variant(name: str) -> str:
    """Map a baseline variant spelling (with or without trailing dot) to its canonical id."""
    try:
        return _VARIANT_ALIASES[name.strip().lower()]
    except KeyError:
        raise ConfigurationError(f"unknown baseline prompt variant: {name!r}") from None


@dataclass(frozen=True)
class RepairTask:
    """One vulnerability-repair instance.

    ``function_span`` is an inclusive, 1-based line range locating the
    vulnerable function inside ``vulnerable_file``; ``vulnerable_lines`` are
    1-based line numbers (in original file coordinates) flagged as vulnerable.
    The three command templates may contain ``{workspace}``, substituted with
    the staged workspace root at execution time.
    """

    id: str
    project_root: Path
    vulnerable_file: str
    function_span: tuple[int, int]
    vulnerable_lines: tuple[int, ...]
    vulnerability_description: str
    build_command: str
    functional_test_command: str
    security_test_command: str
    test_failure_pattern: str
    timeout_seconds: int
    cve_id: str | None = None
    language_hint: str = "c"
    env: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    """Knobs for one repair run; immutable once constructed."""

    enable_cot: bool = True
    enable_feedback: bool = True
    temperatures: tuple[float, ...] = DEFAULT_TEMPERATURES
    feedback_iterations: int = DEFAULT_FEEDBACK_ITERATIONS
    stop_on_first_plausible: bool = False
    prompt_mode: str = PROMPT_MODE_VRPILOT
    system_message: str = DEFAULT_SYSTEM_MESSAGE
    model_name: str = DEFAULT_MODEL_NAME
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self):
        if not self.temperatures:
            raise ConfigurationError("temperatures must be non-empty")
        for t in self.temperatures:
            if not 0.0 <= t <= 1.0:
                raise ConfigurationError(f"temperature {t} outside [0.0, 1.0]")
        if self.feedback_iterations < 0:
            raise ConfigurationError("feedback_iterations must be >= 0")
        if self.max_tokens <= 0:
            raise ConfigurationError("max_tokens must be positive")
        if self.prompt_mode != PROMPT_MODE_VRPILOT:
            object.__setattr__(self, "prompt_mode", normalize_variant(self.prompt_mode))


_REQUIRED_FIELDS = (
    "id",
    "project_root",
    "vulnerable_file",
    "function_span",
    "vulnerable_lines",
    "vulnerability_description",
    "build_command",
    "functional_test_command",
    "security_test_command",
    "test_failure_pattern",
    "timeout_seconds",
)

_COMMAND_FIELDS = ("build_command", "functional_test_command", "security_test_command")


def _task_from_entry(entry, index: int, base_dir: Path) -> RepairTask:
    if not isinstance(entry, dict):
        raise ManifestError(f"manifest entry #{index} is not an object")
    tid = entry.get("id") or f"#{index}"
    missing = [name for name in _REQUIRED_FIELDS if name not in entry]
    if missing:
        raise ManifestError(f"task {tid}: missing field(s) {', '.join(missing)}")

    span = entry["function_span"]
    if not (isinstance(span, (list, tuple)) and len(span) == 2 and all(isinstance(v, int) for v in span)):
        raise ManifestError(f"task {tid}: function_span must be a [start_line, end_line] pair of integers")
    start, end = span
    if start < 1:
        raise ManifestError(f"task {tid}: start_line must be >= 1")
    if start > end:
        raise ManifestError(f"task {tid}: start_line exceeds end_line")

    vlines = entry["vulnerable_lines"]
    if not (isinstance(vlines, list) and all(isinstance(v, int) for v in vlines)):
        raise ManifestError(f"task {tid}: vulnerable_lines must be a list of integers")
    for v in vlines:
        if not start <= v <= end:
            raise ManifestError(f"task {tid}: vulnerable line {v} outside function_span [{start}, {end}]")

    for name in _COMMAND_FIELDS:
        value = entry[name]
        if not isinstance(value, str) or not value.strip():
            raise ManifestError(f"task {tid}: {name} must be a non-empty command string")

    timeout = entry["timeout_seconds"]
    if not isinstance(timeout, int) or timeout <= 0:
        raise ManifestError(f"task {tid}: timeout_seconds must be a positive integer")

    pattern = entry["test_failure_pattern"]
    if not isinstance(pattern, str):
        raise ManifestError(f"task {tid}: test_failure_pattern must be a string")
    try:
        re.compile(pattern)
    except re.error as exc:
        raise ManifestError(f"task {tid}: test_failure_pattern does not compile: {exc}") from exc

    hint = entry.get("language_hint", "c")
    if hint not in LANGUAGE_HINTS:
        raise ManifestError(f"task {tid}: language_hint must be one of {LANGUAGE_HINTS}")

    env = entry.get("env", {})
    if not (isinstance(env, dict) and all(isinstance(k, str) and isinstance(v, str) for k, v in env.items())):
        raise ManifestError(f"task {tid}: env must be a string-to-string map")

    project_root = Path(entry["project_root"])
    if not project_root.is_absolute():
        project_root = (base_dir / project_root).resolve()

    return RepairTask(
        id=str(entry["id"]),
        project_root=project_root,
        vulnerable_file=entry["vulnerable_file"],
        function_span=(start, end),
        vulnerable_lines=tuple(vlines),
        vulnerability_description=entry["vulnerability_description"],
        build_command=entry["build_command"],
        functional_test_command=entry["functional_test_command"],
        security_test_command=entry["security_test_command"],
        test_failure_pattern=pattern,
        timeout_seconds=timeout,
        cve_id=entry.get("cve_id"),
        language_hint=hint,
        env=dict(env),
    )


def load_manifest(path) -> list[RepairTask]:
    """Parse a manifest file into validated tasks.

    An empty file (or empty array) yields an empty list. Structural
    invariants are checked here; filesystem-dependent checks (file exists,
    span within file length) belong to :func:`validate_task`.
    """
    manifest_path = Path(path)
    try:
        text = manifest_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {manifest_path}: {exc}") from exc
    if not text.strip():
        return []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(
            f"{manifest_path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, list):
        raise ManifestError(f"{manifest_path}: expected a top-level array of task objects")
    base_dir = manifest_path.resolve().parent
    return [_task_from_entry(entry, i, base_dir) for i, entry in enumerate(data)]


# Config-file keys that are consumed by clients, not by RunConfig itself.
CONFIG_EXTRA_KEYS = ("base_url",)


def config_from_dict(data) -> RunConfig:
    """Build a :class:`RunConfig` from a plain mapping, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown config key(s): {', '.join(unknown)}")
    kwargs = dict(data)
    if "temperatures" in kwargs:
        temps = kwargs["temperatures"]
        if not isinstance(temps, (list, tuple)) or not all(isinstance(t, (int, float)) for t in temps):
            raise ConfigurationError("temperatures must be a list of numbers")
        kwargs["temperatures"] = tuple(float(t) for t in temps)
    return RunConfig(**kwargs)


def load_run_config(path) -> tuple[RunConfig, dict]:
    """Read a JSON config file; returns (config, extras).

    Extras are the client-level keys from :data:`CONFIG_EXTRA_KEYS`
    (currently just ``base_url`` for the live gateway).
    """
    config_path = Path(path)
    try:
        text = config_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {config_path}: {exc}") from exc
    if not text.strip():
        return RunConfig(), {}
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{config_path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{config_path}: expected a top-level JSON object")
    extras = {key: data.pop(key) for key in list(data) if key in CONFIG_EXTRA_KEYS}
    return config_from_dict(data), extras


def _line_count(path: Path) -> int:
    data = path.read_bytes()
    if not data:
        return 0
    lines = data.split(b"\n")
    if data.endswith(b"\n"):
        return len(lines) - 1
    return len(lines)


def validate_task(task: RepairTask) -> list[str]:
    """Check every task invariant against the actual filesystem.

    Violations are returned as human-readable strings; an empty list means
    the task is runnable.
    """
    violations: list[str] = []
    start, end = task.function_span

    if start < 1:
        violations.append(f"start_line must be >= 1, got {start}")
    if start > end:
        violations.append(f"start_line {start} exceeds end_line {end}")
    for v in task.vulnerable_lines:
        if not start <= v <= end:
            violations.append(f"vulnerable line {v} outside function_span [{start}, {end}]")
    for name in _COMMAND_FIELDS:
        if not getattr(task, name).strip():
            violations.append(f"{name} is empty")
    if task.timeout_seconds <= 0:
        violations.append(f"timeout_seconds must be positive, got {task.timeout_seconds}")
    try:
        re.compile(task.test_failure_pattern)
    except re.error as exc:
        violations.append(f"test_failure_pattern does not compile: {exc}")

    if not task.project_root.is_dir():
        violations.append(f"project_root not found: {task.project_root}")
        return violations
    target = task.project_root / task.vulnerable_file
    if not target.is_file():
        violations.append(f"vulnerable_file not found: {task.vulnerable_file}")
        return violations
    count = _line_count(target)
    if end > count:
        violations.append(f"end_line {end} beyond end of {task.vulnerable_file} ({count} lines)")
    return violations
