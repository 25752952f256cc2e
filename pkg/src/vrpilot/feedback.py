"""Distills stage failure logs into the short error excerpt fed back to the model.

Three extractors, one per failing stage: compiler diagnostics filtered by
proximity to the vulnerable lines, failed functional test names, and a
sanitizer report summary.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ConfigurationError
from .tasks import RepairTask
from .validation import (
    CLASS_COMPILE_ERROR,
    CLASS_FUNCTIONAL_FAIL,
    CLASS_PLAUSIBLE,
    ValidationOutcome,
)

SOURCE_COMPILE = "compile"
SOURCE_FUNCTIONAL = "functional"
SOURCE_SECURITY = "security"
SOURCE_EXTRACTION = "extraction"

EXTRACTION_FAILURE_EXCERPT = "Your previous response contained no code block."

PROXIMITY_RADIUS = 100
SANITIZER_SUMMARY_MAX_LINES = 40

SEVERITY_ERROR = "error"
SEVERITY_WARNING = "warning"
SEVERITY_NOTE = "note"

# gcc/clang "file:line:col: severity: message" and the two-field variant
# (also javac's "file:line: error: message").
_DIAG_RE = re.compile(
    r"^(?P<file>[^\s:][^:]*):(?P<line>\d+)(?::(?P<col>\d+))?:\s*"
    r"(?P<severity>fatal error|error|warning|note):\s*(?P<message>.*)$"
)

_SANITIZER_MARKERS = ("ERROR: AddressSanitizer", "runtime error:")


@dataclass
class CompilerDiagnostic:
    file: str
    line: int
    severity: str
    message: str


@dataclass(frozen=True)
class FeedbackMessage:
    source: str
    excerpt: str

    def __post_init__(self):
        if not self.excerpt:
            raise ValueError("feedback excerpt must be non-empty")


def parse_compiler_diagnostics(stderr: str) -> list[CompilerDiagnostic]:
    """Parse conventional compiler diagnostics out of a build log.

    Lines that do not match the diagnostic shape (source context, carets,
    notes without locations) are attached to the preceding diagnostic's
    message; leading unparseable lines are dropped.
    """
    diagnostics: list[CompilerDiagnostic] = []
    for line in stderr.splitlines():
        match = _DIAG_RE.match(line)
        if match:
            severity = match.group("severity")
            if severity == "fatal error":
                severity = SEVERITY_ERROR
            diagnostics.append(
                CompilerDiagnostic(
                    file=match.group("file"),
                    line=int(match.group("line")),
                    severity=severity,
                    message=match.group("message"),
                )
            )
        elif diagnostics:
            diagnostics[-1].message += "\n" + line
    return diagnostics


def filter_by_proximity(
    diagnostics: list[CompilerDiagnostic],
    vulnerable_lines: list[int] | tuple[int, ...],
    radius: int = PROXIMITY_RADIUS,
) -> list[CompilerDiagnostic]:
    """Keep errors within ``radius`` lines of any vulnerable line, in order.

    Warnings and notes are always dropped. If the filter would discard every
    error but errors exist, the first error is returned so a failed stage
    never produces empty feedback.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    errors = [d for d in diagnostics if d.severity == SEVERITY_ERROR]
    if vulnerable_lines:
        kept = [d for d in errors if min(abs(d.line - v) for v in vulnerable_lines) <= radius]
    else:
        kept = []
    if not kept and errors:
        return [errors[0]]
    return kept


def format_diagnostics(diagnostics: list[CompilerDiagnostic]) -> str:
    return "\n".join(f"{d.file}:{d.line}: {d.severity}: {d.message}" for d in diagnostics)


def extract_failed_tests(stdout_and_stderr: str, test_failure_pattern: str) -> list[str]:
    """Ordered, de-duplicated group-1 captures of the failure pattern."""
    try:
        pattern = re.compile(test_failure_pattern)
    except re.error as exc:
        raise ConfigurationError(f"test_failure_pattern does not compile: {exc}") from exc
    if pattern.groups < 1:
        raise ConfigurationError("test_failure_pattern must capture the test name as group 1")
    seen = set()
    names = []
    for match in pattern.finditer(stdout_and_stderr):
        name = match.group(1)
        if name not in seen:
            seen.add(name)
            names.append(name)
    return names


def summarize_sanitizer_report(stderr: str, max_lines: int = SANITIZER_SUMMARY_MAX_LINES) -> str:
    """Cut the interesting head out of a sanitizer log.

    Starts at the first ASAN/UBSan marker line and runs through the end of
    the first stack-frame block, capped at ``max_lines``. Without a marker,
    the last ``max_lines`` lines are returned instead.
    """
    lines = stderr.splitlines()
    start = next(
        (i for i, line in enumerate(lines) if any(marker in line for marker in _SANITIZER_MARKERS)),
        None,
    )
    if start is None:
        return "\n".join(lines[-max_lines:])
    excerpt: list[str] = []
    seen_frame = False
    for line in lines[start:]:
        is_frame = line.startswith("    #")
        if seen_frame and not is_frame:
            break
        excerpt.append(line)
        seen_frame = seen_frame or is_frame
        if len(excerpt) >= max_lines:
            break
    return "\n".join(excerpt)


def remap_vulnerable_lines(
    vulnerable_lines: tuple[int, ...] | list[int],
    span: tuple[int, int],
    new_span_length: int,
) -> list[int]:
    """Shift vulnerable line numbers into the patched file's coordinates.

    The patch replaces ``span`` with ``new_span_length`` lines: lines after
    the span shift by the length delta, lines inside it are clamped to the
    new span extent, lines before it are unchanged.
    """
    start, end = span
    delta = new_span_length - (end - start + 1)
    remapped = []
    for v in vulnerable_lines:
        if v > end:
            remapped.append(v + delta)
        elif v >= start:
            remapped.append(min(v, start + new_span_length - 1))
        else:
            remapped.append(v)
    return remapped


def _tail(text: str, max_lines: int = SANITIZER_SUMMARY_MAX_LINES) -> str:
    return "\n".join(text.splitlines()[-max_lines:])


def compose_feedback(
    outcome: ValidationOutcome,
    task: RepairTask,
    new_span_length: int | None = None,
) -> FeedbackMessage:
    """Build the error excerpt for the next feedback round.

    ``new_span_length`` is the line count of the applied patch, used to remap
    vulnerable lines into patched-file coordinates for the proximity filter.
    Must not be called on a plausible outcome.
    """
    if outcome.classification == CLASS_PLAUSIBLE:
        raise ValueError("no feedback to compose for a plausible outcome")
    last = outcome.stages[-1]
    log_text = last.stderr if last.stderr.strip() else last.stdout

    if outcome.classification == CLASS_COMPILE_ERROR:
        source = SOURCE_COMPILE
        diagnostics = parse_compiler_diagnostics(log_text)
        if not diagnostics and last.stdout.strip():
            diagnostics = parse_compiler_diagnostics(last.stdout)
        if new_span_length is not None:
            lines = remap_vulnerable_lines(task.vulnerable_lines, task.function_span, new_span_length)
        else:
            lines = list(task.vulnerable_lines)
        kept = filter_by_proximity(diagnostics, lines)
        excerpt = format_diagnostics(kept) if kept else _tail(log_text)
    elif outcome.classification == CLASS_FUNCTIONAL_FAIL:
        source = SOURCE_FUNCTIONAL
        combined = last.stdout + "\n" + last.stderr
        names = extract_failed_tests(combined, task.test_failure_pattern)
        excerpt = "Failed tests: " + ", ".join(names) if names else _tail(combined)
    else:
        source = SOURCE_SECURITY
        excerpt = summarize_sanitizer_report(log_text)

    if not excerpt.strip():
        excerpt = f"{last.stage} stage failed with exit code {last.exit_code}"
    return FeedbackMessage(source=source, excerpt=excerpt)
