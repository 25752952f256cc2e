"""The repair loop: temperature sweep times (initial attempt + feedback rounds).

Reasoning and feedback are independently toggleable. The feedback chain is
per-temperature: each temperature restarts from the initial prompt, and each
feedback round embeds only the previous candidate and its error excerpt, so
prompt size stays bounded.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import ConfigurationError, ExtractionError, GatewayError, PromptError, VRpilotError
from .feedback import EXTRACTION_FAILURE_EXCERPT, SOURCE_EXTRACTION, FeedbackMessage, compose_feedback
from .gateway import ChatRequest
from .patching import PatchCandidate, apply_patch, extract_code, read_span, remove_workspace, stage_workspace
from .prompting import (
    PromptBundle,
    Provenance,
    build_codexvr_prompt,
    build_cot_answer_prompt,
    build_cot_reasoning_prompt,
    build_direct_prompt,
    build_feedback_task_text,
    build_task_text,
)
from .tasks import PROMPT_MODE_VRPILOT, RepairTask, RunConfig, validate_task
from .validation import ValidationOutcome, validate


@dataclass
class AttemptRecord:
    """Everything one attempt produced: prompts, candidate, outcome, feedback."""

    task_id: str
    temperature: float
    attempt_index: int
    prompts: list[PromptBundle] = field(default_factory=list)
    reasoning: str | None = None
    candidate: PatchCandidate | None = None
    outcome: ValidationOutcome | None = None
    feedback_sent: FeedbackMessage | None = None
    llm_calls: int = 0
    error: str | None = None


@dataclass
class TaskRunResult:
    task_id: str
    records: list[AttemptRecord]
    error: str | None = None


def _request(bundle: PromptBundle, config: RunConfig, temperature: float) -> ChatRequest:
    return ChatRequest(
        model_name=config.model_name,
        system=config.system_message,
        turns=bundle.turns,
        temperature=temperature,
        max_tokens=config.max_tokens,
    )


def _block_line_count(code: str) -> int:
    block = code[:-1] if code.endswith("\n") else code
    return block.count("\n") + 1


def repair_task(
    task: RepairTask,
    config: RunConfig,
    gateway,
    scratch_dir,
    on_attempt=None,
    keep_workspaces: bool = False,
) -> list[AttemptRecord]:
    """Run the full repair loop for one task and return its attempt ledger.

    Gateway failures are recorded on the attempt and skip to the next
    temperature; configuration and workspace errors abort the task.
    """
    source = read_span(task.project_root / task.vulnerable_file, task.function_span)
    vrpilot_mode = config.prompt_mode == PROMPT_MODE_VRPILOT
    if vrpilot_mode:
        base_text = build_task_text(task, source)
    else:
        base_text = build_codexvr_prompt(
            config.prompt_mode, task, source, system=config.system_message
        ).text

    attempts_per_temperature = 1 + (config.feedback_iterations if config.enable_feedback else 0)
    records: list[AttemptRecord] = []
    task_done = False

    for temperature in config.temperatures:
        if task_done:
            break
        prior_code: str | None = None
        prior_excerpt: str | None = None

        for attempt_index in range(attempts_per_temperature):
            provenance = Provenance(task.id, temperature, attempt_index)
            record = AttemptRecord(task.id, temperature, attempt_index)
            records.append(record)
            is_feedback = attempt_index > 0
            x_text = (
                build_feedback_task_text(base_text, prior_code, prior_excerpt)
                if is_feedback
                else base_text
            )

            try:
                if config.enable_cot:
                    reasoning_prompt = build_cot_reasoning_prompt(
                        x_text, system=config.system_message, feedback=is_feedback, provenance=provenance
                    )
                    record.prompts.append(reasoning_prompt)
                    reasoning = gateway.complete(_request(reasoning_prompt, config, temperature))
                    record.llm_calls += 1
                    record.reasoning = reasoning.content
                    answer_prompt = build_cot_answer_prompt(reasoning_prompt, reasoning.content)
                    record.prompts.append(answer_prompt)
                    answer = gateway.complete(_request(answer_prompt, config, temperature))
                    record.llm_calls += 1
                    response_text = answer.content
                else:
                    if is_feedback or vrpilot_mode:
                        bundle = build_direct_prompt(
                            x_text, system=config.system_message, provenance=provenance
                        )
                    else:
                        bundle = build_codexvr_prompt(
                            config.prompt_mode, task, source,
                            system=config.system_message, provenance=provenance,
                        )
                    record.prompts.append(bundle)
                    response = gateway.complete(_request(bundle, config, temperature))
                    record.llm_calls += 1
                    response_text = response.content
            except (GatewayError, PromptError) as exc:
                record.error = str(exc)
                if on_attempt:
                    on_attempt(record)
                break  # next temperature

            feedback_message = None
            try:
                code, method = extract_code(response_text, task.language_hint)
            except ExtractionError:
                feedback_message = FeedbackMessage(SOURCE_EXTRACTION, EXTRACTION_FAILURE_EXCERPT)
                prior_code = response_text if response_text.strip() else "(empty response)"
            else:
                record.candidate = PatchCandidate(
                    code=code,
                    raw_response=response_text,
                    reasoning=record.reasoning,
                    temperature=temperature,
                    attempt_index=attempt_index,
                    extraction_method=method,
                )
                workspace = stage_workspace(task, attempt_index, scratch_dir)
                try:
                    apply_patch(workspace, task, code)
                    record.outcome = validate(workspace, task)
                finally:
                    if not keep_workspaces:
                        remove_workspace(workspace)
                prior_code = code
                if record.outcome.plausible:
                    if on_attempt:
                        on_attempt(record)
                    if config.stop_on_first_plausible:
                        task_done = True
                    break  # this temperature is done
                feedback_message = compose_feedback(
                    record.outcome, task, new_span_length=_block_line_count(code)
                )

            if config.enable_feedback and attempt_index < attempts_per_temperature - 1:
                record.feedback_sent = feedback_message
                prior_excerpt = feedback_message.excerpt
            if on_attempt:
                on_attempt(record)

    return records


def run_campaign(
    tasks: list[RepairTask],
    config: RunConfig,
    gateway,
    scratch_dir,
    parallelism: int = 1,
    on_attempt=None,
    keep_workspaces: bool = False,
) -> list[TaskRunResult]:
    """Repair every task with at most ``parallelism`` concurrent workers.

    Results keep the input order. A task that fails validation or raises
    carries its error in its result slot; the campaign continues.
    """
    if parallelism < 1:
        raise ConfigurationError("parallelism must be >= 1")

    def worker(task: RepairTask) -> TaskRunResult:
        violations = validate_task(task)
        if violations:
            return TaskRunResult(task.id, [], error="; ".join(violations))
        try:
            records = repair_task(
                task, config, gateway, scratch_dir,
                on_attempt=on_attempt, keep_workspaces=keep_workspaces,
            )
        except VRpilotError as exc:
            return TaskRunResult(task.id, [], error=str(exc))
        return TaskRunResult(task.id, records)

    if not tasks:
        return []
    if parallelism == 1:
        return [worker(task) for task in tasks]
    with ThreadPoolExecutor(max_workers=parallelism) as executor:
        return list(executor.map(worker, tasks))
