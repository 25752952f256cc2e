"""Metrics over attempt records, plus on-disk result and review exports.

Percentages are attempt-level: the denominator is the number of attempts
that produced a candidate patch, so a response with no extractable code
consumes budget but does not dilute the compile rate.
"""

from __future__ import annotations

import dataclasses
import difflib
import json
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError
from .patching import read_span
from .tasks import RepairTask, RunConfig
from .validation import CLASS_COMPILE_ERROR, CLASS_PLAUSIBLE

RESULTS_FILENAME = "attempts.jsonl"
SUMMARY_FILENAME = "summary.json"


@dataclass(frozen=True)
class TaskMetrics:
    task_id: str
    attempts_total: int        # attempts that produced a candidate
    attempts_recorded: int     # all attempts, including extraction failures
    attempts_compilable: int
    attempts_plausible: int
    llm_calls: int
    passed: bool               # any plausible attempt

    @property
    def compilable_pct(self) -> float:
        return 100.0 * self.attempts_compilable / self.attempts_total if self.attempts_total else 0.0

    @property
    def plausible_pct(self) -> float:
        return 100.0 * self.attempts_plausible / self.attempts_total if self.attempts_total else 0.0


@dataclass(frozen=True)
class RunReport:
    tasks: tuple[TaskMetrics, ...]
    attempts_total: int
    attempts_recorded: int
    attempts_compilable: int
    attempts_plausible: int
    llm_calls: int
    compilable_pct: float
    plausible_pct: float
    empty: bool
    config: dict | None = None
    wall_clock_seconds: float | None = None
    task_errors: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["tasks"] = [
            dict(dataclasses.asdict(t), compilable_pct=t.compilable_pct, plausible_pct=t.plausible_pct)
            for t in self.tasks
        ]
        data["task_errors"] = [list(pair) for pair in self.task_errors]
        return data


def row_from_record(record) -> dict:
    """Flatten one attempt record into a JSON-serializable row."""
    outcome = record.outcome
    return {
        "task_id": record.task_id,
        "temperature": record.temperature,
        "attempt_index": record.attempt_index,
        "llm_calls": record.llm_calls,
        "prompt_digests": [bundle.digest() for bundle in record.prompts],
        "candidate": record.candidate is not None,
        "extraction_method": record.candidate.extraction_method if record.candidate else None,
        "classification": outcome.classification if outcome else None,
        "plausible": bool(outcome and outcome.plausible),
        "feedback_source": record.feedback_sent.source if record.feedback_sent else None,
        "error": record.error,
    }


def rows_from_results(results) -> list[dict]:
    return [row_from_record(record) for result in results for record in result.records]


class ReportSink:
    """Thread-safe collector for attempt rows, optionally mirrored to JSONL."""

    def __init__(self, path: Path | None = None):
        self._lock = threading.Lock()
        self._rows: list[dict] = []
        self._handle = open(path, "a", encoding="utf-8") if path else None

    def append(self, record) -> None:
        row = row_from_record(record)
        with self._lock:
            self._rows.append(row)
            if self._handle:
                self._handle.write(json.dumps(row) + "\n")
                self._handle.flush()

    @property
    def rows(self) -> list[dict]:
        with self._lock:
            return list(self._rows)

    def close(self) -> None:
        with self._lock:
            if self._handle:
                self._handle.close()
                self._handle = None


def compute_metrics(
    rows: list[dict],
    config: RunConfig | dict | None = None,
    wall_clock_seconds: float | None = None,
    task_errors: list[tuple[str, str]] | None = None,
) -> RunReport:
    """Fold attempt rows into per-task and aggregate metrics.

    Pure and permutation-invariant within a task; task order follows first
    appearance in the rows.
    """
    per_task: dict[str, dict] = {}
    for row in rows:
        bucket = per_task.setdefault(
            row["task_id"],
            {"total": 0, "recorded": 0, "compilable": 0, "plausible": 0, "calls": 0},
        )
        bucket["recorded"] += 1
        bucket["calls"] += row.get("llm_calls", 0)
        if not row.get("candidate"):
            continue
        bucket["total"] += 1
        classification = row.get("classification")
        if classification is not None and classification != CLASS_COMPILE_ERROR:
            bucket["compilable"] += 1
        if classification == CLASS_PLAUSIBLE:
            bucket["plausible"] += 1

    tasks = tuple(
        TaskMetrics(
            task_id=task_id,
            attempts_total=bucket["total"],
            attempts_recorded=bucket["recorded"],
            attempts_compilable=bucket["compilable"],
            attempts_plausible=bucket["plausible"],
            llm_calls=bucket["calls"],
            passed=bucket["plausible"] > 0,
        )
        for task_id, bucket in per_task.items()
    )
    total = sum(t.attempts_total for t in tasks)
    compilable = sum(t.attempts_compilable for t in tasks)
    plausible = sum(t.attempts_plausible for t in tasks)
    config_echo = dataclasses.asdict(config) if isinstance(config, RunConfig) else config
    return RunReport(
        tasks=tasks,
        attempts_total=total,
        attempts_recorded=sum(t.attempts_recorded for t in tasks),
        attempts_compilable=compilable,
        attempts_plausible=plausible,
        llm_calls=sum(t.llm_calls for t in tasks),
        compilable_pct=100.0 * compilable / total if total else 0.0,
        plausible_pct=100.0 * plausible / total if total else 0.0,
        empty=total == 0,
        config=config_echo,
        wall_clock_seconds=wall_clock_seconds,
        task_errors=tuple(task_errors or ()),
    )


def format_report(report) -> str:
    """Render a report (or its dict form) as one line per task plus an aggregate."""
    data = report.to_dict() if isinstance(report, RunReport) else report
    lines = []
    for t in data["tasks"]:
        lines.append(
            f"{t['task_id']}: pass={'yes' if t['passed'] else 'no'} "
            f"compilable {t['compilable_pct']:.1f}% ({t['attempts_compilable']}/{t['attempts_total']}) "
            f"plausible {t['plausible_pct']:.1f}% ({t['attempts_plausible']}/{t['attempts_total']}) "
            f"llm_calls={t['llm_calls']}"
        )
    for task_id, message in data.get("task_errors") or ():
        lines.append(f"{task_id}: error: {message}")
    if data["empty"]:
        lines.append("aggregate: no attempts produced a candidate")
    else:
        lines.append(
            f"aggregate: compilable {data['compilable_pct']:.1f}% "
            f"plausible {data['plausible_pct']:.1f}% "
            f"over {data['attempts_total']} attempts"
        )
    return "\n".join(lines)


def _refuse_existing(paths: list[Path], force: bool) -> None:
    existing = [p for p in paths if p.exists()]
    if existing and not force:
        names = ", ".join(str(p) for p in existing)
        raise ConfigurationError(f"refusing to overwrite existing results: {names} (use --force)")


def export_results(report: RunReport, rows: list[dict], out_dir: Path, force: bool = False) -> None:
    """Write attempts.jsonl (one row per attempt) and summary.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / RESULTS_FILENAME
    summary_path = out_dir / SUMMARY_FILENAME
    _refuse_existing([results_path, summary_path], force)
    with open(results_path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row) + "\n")
    with open(summary_path, "w", encoding="utf-8") as handle:
        json.dump(report.to_dict(), handle, indent=2)
        handle.write("\n")


def load_rows(path: Path) -> list[dict]:
    """Read attempt rows back from a results directory or a JSONL file."""
    path = Path(path)
    if path.is_dir():
        path = path / RESULTS_FILENAME
    if not path.is_file():
        raise ConfigurationError(f"results file not found: {path}")
    rows = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
    return rows


def _ensure_newline(text: str) -> str:
    return text if text.endswith("\n") or not text else text + "\n"


def _stage_log(outcome) -> str:
    parts = []
    for stage in outcome.stages:
        status = "timed out" if stage.timed_out else ("pass" if stage.passed else "fail")
        parts.append(f"== {stage.stage} == exit {stage.exit_code} ({status})")
        parts.append("--- stdout ---")
        parts.append(stage.stdout.rstrip("\n"))
        parts.append("--- stderr ---")
        parts.append(stage.stderr.rstrip("\n"))
    parts.append(f"classification: {outcome.classification}")
    return "\n".join(parts) + "\n"


def export_review_bundle(results, tasks: list[RepairTask], out_dir: Path, force: bool = False) -> list[Path]:
    """Write one directory per plausible attempt for manual correctness review.

    Each directory holds the original function, the patched function, their
    unified diff, the model's reasoning, and the validation logs.
    """
    out_dir = Path(out_dir)
    by_id = {task.id: task for task in tasks}
    written: list[Path] = []
    for result in results:
        for record in result.records:
            if not (record.outcome and record.outcome.plausible and record.candidate):
                continue
            task = by_id.get(record.task_id)
            if task is None:
                raise ConfigurationError(f"no task definition for recorded task id: {record.task_id}")
            name = f"{record.task_id}-t{record.temperature}-a{record.attempt_index}"
            bundle_dir = out_dir / name
            _refuse_existing([bundle_dir], force)
            bundle_dir.mkdir(parents=True, exist_ok=True)
            original = read_span(task.project_root / task.vulnerable_file, task.function_span)
            patched = record.candidate.code
            diff = "".join(
                difflib.unified_diff(
                    _ensure_newline(original).splitlines(keepends=True),
                    _ensure_newline(patched).splitlines(keepends=True),
                    fromfile="original/" + task.vulnerable_file,
                    tofile="patched/" + task.vulnerable_file,
                )
            )
            (bundle_dir / "original_function.txt").write_text(original, encoding="utf-8")
            (bundle_dir / "patched_function.txt").write_text(patched, encoding="utf-8")
            (bundle_dir / "patch.diff").write_text(diff, encoding="utf-8")
            (bundle_dir / "reasoning.txt").write_text(record.candidate.reasoning or "", encoding="utf-8")
            (bundle_dir / "validation_logs.txt").write_text(_stage_log(record.outcome), encoding="utf-8")
            written.append(bundle_dir)
    return written
