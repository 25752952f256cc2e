"""Candidate extraction from model responses and workspace staging/patching.

Files are treated as raw bytes split on newlines so patching never disturbs
the original encoding outside the replaced span.
"""

from __future__ import annotations

import os
import re
import shutil
import stat
import uuid
from dataclasses import dataclass
from pathlib import Path

from .errors import ExtractionError, WorkspaceError
from .prompting import ANSWER_TRIGGER
from .tasks import RepairTask

EXTRACTION_FENCED = "fenced_block"
EXTRACTION_TRAILING = "trailing_heuristic"

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
_NUMBER_PREFIX_RE = re.compile(r"(\d+) ")


@dataclass(frozen=True)
class PatchCandidate:
    """Replacement code extracted from one model response."""

    code: str
    raw_response: str
    reasoning: str | None
    temperature: float
    attempt_index: int
    extraction_method: str


@dataclass(frozen=True)
class Workspace:
    """A staged copy of the project tree for one patch attempt."""

    root: Path
    task_id: str
    attempt_index: int


def strip_line_numbers(code: str) -> str:
    """Remove "<i> " prefixes when every line carries the consecutive sequence 1..n.

    Anything else (missing prefixes, out-of-order numbers) is returned
    unchanged: partial stripping could mangle legitimate code.
    """
    if not code:
        return code
    trailing = code.endswith("\n")
    lines = code.split("\n")
    if trailing:
        lines = lines[:-1]
    if not lines:
        return code
    matches = [_NUMBER_PREFIX_RE.match(line) for line in lines]
    if not all(matches):
        return code
    if [int(m.group(1)) for m in matches] != list(range(1, len(lines) + 1)):
        return code
    stripped = "\n".join(line[m.end():] for line, m in zip(lines, matches))
    return stripped + ("\n" if trailing else "")


def extract_code(response: str, language_hint: str = "c") -> tuple[str, str]:
    """Pull replacement code out of a model response.

    Prefers the longest fenced code block; otherwise falls back to whatever
    follows the final answer trigger. Echoed line numbers are stripped.
    Returns (code, extraction_method). ``language_hint`` is accepted for
    interface stability; extraction itself is language-agnostic.
    """
    if not response:
        raise ExtractionError("empty response")

    blocks = _FENCE_RE.findall(response)
    if blocks:
        block = max(blocks, key=len)
        if block.endswith("\n"):
            block = block[:-1]
        code = strip_line_numbers(block)
        if not code.strip():
            raise ExtractionError("fenced code block is empty")
        return code, EXTRACTION_FENCED

    idx = response.rfind(ANSWER_TRIGGER)
    if idx >= 0:
        rest = response[idx + len(ANSWER_TRIGGER):]
        rest = rest.lstrip(" \t")
        if rest.startswith(":"):
            rest = rest[1:]
        rest = rest.lstrip(" \t")
        if rest.startswith("\n"):
            rest = rest[1:]
        code = strip_line_numbers(rest)
        if code.strip():
            return code, EXTRACTION_TRAILING

    raise ExtractionError("response contains no code block")


def _split_lines(data: bytes) -> tuple[list[bytes], bool]:
    """Logical lines plus whether the data ended with a newline."""
    if not data:
        return [], False
    trailing = data.endswith(b"\n")
    lines = data.split(b"\n")
    if trailing:
        lines = lines[:-1]
    return lines, trailing


def read_span(path: Path, span: tuple[int, int]) -> str:
    """Exact text of the inclusive 1-based line range, newline-joined."""
    start, end = span
    lines, _ = _split_lines(Path(path).read_bytes())
    if start < 1 or start > end or end > len(lines):
        raise WorkspaceError(f"span ({start}, {end}) out of range for {path} ({len(lines)} lines)")
    return b"\n".join(lines[start - 1:end]).decode("utf-8", errors="replace")


def stage_workspace(task: RepairTask, attempt_index: int, scratch_dir) -> Workspace:
    """Copy the project tree to a fresh writable location under scratch_dir."""
    if not task.project_root.is_dir():
        raise WorkspaceError(f"project_root not found: {task.project_root}")
    scratch = Path(scratch_dir)
    scratch.mkdir(parents=True, exist_ok=True)
    dest = scratch / f"{task.id}-a{attempt_index}-{uuid.uuid4().hex[:8]}"
    shutil.copytree(task.project_root, dest)
    # copytree preserves modes, so a read-only source would yield a read-only copy
    for dirpath, _dirnames, filenames in os.walk(dest):
        for path in [dirpath] + [os.path.join(dirpath, f) for f in filenames]:
            os.chmod(path, os.stat(path).st_mode | stat.S_IWUSR)
    return Workspace(root=dest, task_id=task.id, attempt_index=attempt_index)


def apply_patch(workspace: Workspace, task: RepairTask, code: str) -> Path:
    """Replace the function_span lines of the workspace copy with ``code``.

    ``code`` is treated as a block of lines; a single trailing newline is the
    block terminator, not an extra empty line. All bytes outside the span are
    untouched.
    """
    if not code:
        raise WorkspaceError("patch code must be non-empty")
    target = workspace.root / task.vulnerable_file
    if not target.is_file():
        raise WorkspaceError(f"vulnerable_file not found in workspace: {task.vulnerable_file}")
    data = target.read_bytes()
    lines, trailing = _split_lines(data)
    start, end = task.function_span
    if start < 1 or start > end or end > len(lines):
        raise WorkspaceError(
            f"span ({start}, {end}) out of range for {task.vulnerable_file} ({len(lines)} lines)"
        )
    block = code[:-1] if code.endswith("\n") else code
    new_lines = block.encode("utf-8").split(b"\n")
    patched = lines[:start - 1] + new_lines + lines[end:]
    target.write_bytes(b"\n".join(patched) + (b"\n" if trailing else b""))
    return target


def remove_workspace(workspace: Workspace) -> None:
    shutil.rmtree(workspace.root, ignore_errors=True)
