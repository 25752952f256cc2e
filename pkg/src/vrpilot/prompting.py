"""Prompt construction for every mode the pipeline supports.

Two-stage reasoning prompts ("Q: <task> A: Let's think step by step" then
"<that prompt> <reasoning> Therefore the fixed code is"), direct prompts
without trigger sentences, feedback prompts embedding the previous patch and
its error excerpt, and the six legacy single-shot baseline templates.

All builders are pure: identical inputs produce byte-identical outputs, which
is what makes recorded transcripts replayable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .errors import PromptError
from .tasks import RepairTask, normalize_variant

REASONING_TRIGGER = "Let's think step by step"
ANSWER_TRIGGER = "Therefore the fixed code is"
PRIOR_FIX_HEADER = "Previously suggested fix:"
ERROR_HEADER = "It failed with the following error:"

KIND_INITIAL = "initial"
KIND_COT_REASONING = "cot_reasoning"
KIND_COT_ANSWER = "cot_answer"
KIND_FEEDBACK_REASONING = "feedback_reasoning"
KIND_FEEDBACK_ANSWER = "feedback_answer"
KIND_BASELINE = "baseline"

_ANSWER_KINDS = (KIND_COT_ANSWER, KIND_FEEDBACK_ANSWER)
_REASONING_KINDS = (KIND_COT_REASONING, KIND_FEEDBACK_REASONING)


@dataclass(frozen=True)
class Provenance:
    """Where a prompt came from: which task, temperature, and attempt."""

    task_id: str = ""
    temperature: float = 0.0
    attempt_index: int = 0


@dataclass(frozen=True)
class PromptBundle:
    """An ordered chat exchange plus the template that produced it."""

    system: str
    turns: tuple[tuple[str, str], ...]
    kind: str
    variant: str | None = None
    provenance: Provenance | None = None

    def __post_init__(self):
        if not self.turns:
            raise PromptError("prompt bundle must contain at least one turn")
        if self.turns[0][0] != "user":
            raise PromptError("first turn must have role 'user'")
        if self.kind in _ANSWER_KINDS and not self.turns[-1][1].endswith(ANSWER_TRIGGER):
            raise PromptError(f"{self.kind} bundle must end with the answer trigger")

    @property
    def text(self) -> str:
        """Content of the final user turn (what gets sent for completion)."""
        return self.turns[-1][1]

    def digest(self) -> str:
        payload = json.dumps(
            {"system": self.system, "kind": self.kind, "turns": list(self.turns)},
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def number_lines(code: str) -> str:
    """Prefix line i with "<i> ", 1-based; trailing-newline presence is preserved."""
    if code == "":
        return ""
    trailing = code.endswith("\n")
    lines = code.split("\n")
    if trailing:
        lines = lines[:-1]
    numbered = "\n".join(f"{i} {line}" for i, line in enumerate(lines, 1))
    return numbered + ("\n" if trailing else "")


def build_task_text(task: RepairTask, source: str) -> str:
    """Instruction sentence plus the numbered vulnerable function.

    ``source`` must be the exact text of the function_span lines. Vulnerable
    line numbers are renumbered relative to the extracted block (block line 1
    is function_span start).
    """
    if not source:
        raise PromptError(f"task {task.id}: empty function source")
    start = task.function_span[0]
    block_lines = sorted({v - start + 1 for v in task.vulnerable_lines})
    listed = ", ".join(str(n) for n in block_lines)
    instruction = (
        f"Fix the {task.vulnerability_description} vulnerability "
        f"at line(s) {listed} in the following code:"
    )
    return instruction + "\n" + number_lines(source)


def build_cot_reasoning_prompt(
    task_text: str,
    *,
    system: str = "",
    feedback: bool = False,
    provenance: Provenance | None = None,
) -> PromptBundle:
    """Stage-one prompt: "Q: <task>\\nA: <reasoning trigger>"."""
    if not task_text:
        raise PromptError("task text must be non-empty")
    content = "Q: " + task_text + "\nA: " + REASONING_TRIGGER
    kind = KIND_FEEDBACK_REASONING if feedback else KIND_COT_REASONING
    return PromptBundle(system=system, turns=(("user", content),), kind=kind, provenance=provenance)


def build_cot_answer_prompt(reasoning_prompt: PromptBundle, reasoning: str) -> PromptBundle:
    """Stage-two prompt: stage-one text + model reasoning + answer trigger."""
    if reasoning_prompt.kind not in _REASONING_KINDS:
        raise PromptError(f"cannot build an answer prompt from kind {reasoning_prompt.kind!r}")
    if not reasoning:
        raise PromptError("reasoning must be non-empty")
    content = reasoning_prompt.text + "\n" + reasoning + "\n" + ANSWER_TRIGGER
    kind = KIND_FEEDBACK_ANSWER if reasoning_prompt.kind == KIND_FEEDBACK_REASONING else KIND_COT_ANSWER
    return PromptBundle(
        system=reasoning_prompt.system,
        turns=(("user", content),),
        kind=kind,
        provenance=reasoning_prompt.provenance,
    )


def build_feedback_task_text(task_text: str, prior_patch: str, error_excerpt: str) -> str:
    """Task text followed by the previous patch and the error it produced.

    The result is itself a task text: passing it through
    :func:`build_cot_reasoning_prompt` yields the feedback-round prompt.
    """
    if not task_text:
        raise PromptError("task text must be non-empty")
    if not prior_patch:
        raise PromptError("prior patch must be non-empty")
    if not error_excerpt:
        raise PromptError("error excerpt must be non-empty")
    return (
        task_text
        + "\n" + PRIOR_FIX_HEADER
        + "\n" + prior_patch
        + "\n" + ERROR_HEADER
        + "\n" + error_excerpt
    )


def build_direct_prompt(
    task_text: str,
    *,
    system: str = "",
    provenance: Provenance | None = None,
) -> PromptBundle:
    """Single prompt with no trigger sentences (reasoning disabled)."""
    if not task_text:
        raise PromptError("task text must be non-empty")
    return PromptBundle(system=system, turns=(("user", task_text),), kind=KIND_INITIAL, provenance=provenance)


def _line_comment_prefix(language_hint: str) -> str:
    return "#" if language_hint == "other" else "//"


def _signature_of(source: str) -> str:
    """Everything up to and including the first opening brace; first line as fallback."""
    idx = source.find("{")
    if idx >= 0:
        return source[: idx + 1]
    return source.split("\n", 1)[0]


def build_codexvr_prompt(
    variant: str,
    task: RepairTask,
    source: str,
    *,
    system: str = "",
    provenance: Provenance | None = None,
) -> PromptBundle:
    """One of the six single-shot baseline templates.

    n.h: signature with the body deleted; s.1/s.2: the same plus a one-line
    bugfix comment; c.: a BUG comment, the fully line-commented function, a
    FIXED: comment, and the function's first token; c.a.: the same in
    /* */ style; c.n: c.a. without the trailing first token.
    """
    name = normalize_variant(variant)
    if not source:
        raise PromptError(f"task {task.id}: empty function source")
    desc = task.vulnerability_description
    comment = _line_comment_prefix(task.language_hint)
    signature = _signature_of(source)
    first_token = source.split()[0] if source.split() else ""

    if name == "n.h":
        text = signature + "\n"
    elif name == "s.1":
        text = f"{comment} bugfix: fixed {desc}\n{signature}\n"
    elif name == "s.2":
        text = f"{comment} fixed {desc} bug\n{signature}\n"
    elif name == "c.":
        commented = "\n".join(f"{comment} {line}" for line in source.split("\n"))
        text = f"{comment} BUG: {desc}\n{commented}\n{comment} FIXED:\n{first_token}"
    elif name in ("c.a.", "c.n"):
        commented = "\n".join(f"/* {line} */" for line in source.split("\n"))
        text = f"/* BUG: {desc} */\n{commented}\n/* FIXED: */\n"
        if name == "c.a.":
            text += first_token
    else:  # pragma: no cover - normalize_variant rejects unknowns
        raise PromptError(f"unknown baseline variant {variant!r}")

    return PromptBundle(
        system=system,
        turns=(("user", text),),
        kind=KIND_BASELINE,
        variant=name,
        provenance=provenance,
    )
