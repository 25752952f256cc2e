"""Command-line client for the repair service.

Every subcommand talks HTTP to the service. By default the app runs
in-process (no socket); pass --server to point at a running instance,
or start one with `vrpilot serve`.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import click
import httpx

from .errors import VRpilotError
from .reporting import format_report
from .tasks import BASELINE_VARIANTS, PROMPT_MODE_VRPILOT, load_run_config
from .service.app import create_app

PROMPT_MODES = (PROMPT_MODE_VRPILOT,) + BASELINE_VARIANTS


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from starlette.testclient import TestClient

    return TestClient(create_app(), base_url="http://vrpilot.internal")


def _check(response) -> dict:
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except (ValueError, AttributeError):
            detail = response.text
        raise click.ClickException(str(detail))
    return response.json()


@click.group()
@click.option("--server", default=None, metavar="URL", help="Base URL of a running service; default runs in-process.")
@click.version_option(package_name="vrpilot")
@click.pass_context
def main(ctx, server):
    ctx.obj = {"server": server}


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(), help="Task manifest (JSON array).")
@click.option("--config", "config_path", default=None, type=click.Path(), help="Run config (JSON object).")
@click.option("--replay", "replay_path", default=None, type=click.Path(), help="Replay responses from this transcript.")
@click.option("--record", "record_path", default=None, type=click.Path(), help="Record live responses to this transcript.")
@click.option("--parallel", "parallelism", default=1, show_default=True, type=int, help="Concurrent tasks.")
@click.option("--out", "out_dir", default=None, type=click.Path(), help="Directory for attempts.jsonl, summary.json and review bundles.")
@click.option("--force", is_flag=True, help="Overwrite existing results in --out.")
@click.option("--keep-workspaces", is_flag=True, help="Leave staged workspaces on disk for inspection.")
@click.pass_context
def run(ctx, manifest_path, config_path, replay_path, record_path, parallelism, out_dir, force, keep_workspaces):
    """Run the full repair campaign over every task in the manifest."""
    if replay_path and record_path:
        raise click.UsageError("--replay and --record are mutually exclusive")
    config_dict: dict = {}
    base_url = None
    if config_path:
        try:
            config, extras = load_run_config(config_path)
        except VRpilotError as exc:
            raise click.ClickException(str(exc)) from exc
        config_dict = dataclasses.asdict(config)
        config_dict["temperatures"] = list(config_dict["temperatures"])
        base_url = extras.get("base_url")
    if replay_path:
        gateway = {"kind": "replay", "transcript_path": str(Path(replay_path).resolve())}
    else:
        gateway = {"kind": "live", "base_url": base_url}
        if record_path:
            gateway["record_path"] = str(Path(record_path).resolve())
    body = {
        "manifest_path": str(Path(manifest_path).resolve()),
        "config": config_dict,
        "gateway": gateway,
        "parallelism": parallelism,
        "out_dir": str(Path(out_dir).resolve()) if out_dir else None,
        "force": force,
        "keep_workspaces": keep_workspaces,
        "wait": True,
    }
    with _client(ctx.obj["server"]) as client:
        status = _check(client.post("/campaigns", json=body))
    if status["status"] != "completed":
        raise click.ClickException(status.get("error") or "campaign failed")
    click.echo(format_report(status["report"]))
    if out_dir:
        click.echo(f"results written to {out_dir}")


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--task", "task_id", required=True, help="Task id from the manifest.")
@click.option("--patch", "patch_path", default=None, type=click.Path(),
              help="File whose contents replace the vulnerable function span; omit to validate the tree as-is.")
@click.pass_context
def validate(ctx, manifest_path, task_id, patch_path):
    """Run the compile/functional/security pipeline without any model."""
    body = {
        "manifest_path": str(Path(manifest_path).resolve()),
        "task_id": task_id,
        "patch_path": str(Path(patch_path).resolve()) if patch_path else None,
    }
    with _client(ctx.obj["server"]) as client:
        data = _check(client.post("/validations", json=body))
    failing = None
    for stage in data["stages"]:
        note = " (timed out)" if stage["timed_out"] else ""
        click.echo(f"{stage['stage']}: {'pass' if stage['passed'] else 'fail'} [exit {stage['exit_code']}]{note}")
        if not stage["passed"] and failing is None:
            failing = stage
    if failing:
        for label, text in (("stdout", failing["stdout"]), ("stderr", failing["stderr"])):
            if text.strip():
                click.echo(f"--- {failing['stage']} {label} ---")
                click.echo(text.rstrip("\n"))
    click.echo(f"classification: {data['classification']}")


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--task", "task_id", required=True)
@click.option("--mode", default=PROMPT_MODE_VRPILOT, show_default=True, type=click.Choice(PROMPT_MODES))
@click.option("--stage", default="reasoning", show_default=True, type=click.Choice(["reasoning", "answer"]),
              help="Which of the two chained prompts to print (vrpilot mode only).")
@click.pass_context
def prompt(ctx, manifest_path, task_id, mode, stage):
    """Print the exact prompt text that would be sent for a task."""
    body = {
        "manifest_path": str(Path(manifest_path).resolve()),
        "task_id": task_id,
        "mode": mode,
        "stage": stage,
    }
    with _client(ctx.obj["server"]) as client:
        data = _check(client.post("/prompts", json=body))
    click.echo(data["text"], nl=False)


@main.command()
@click.option("--in", "in_dir", required=True, type=click.Path(), help="Results directory holding attempts.jsonl.")
@click.pass_context
def report(ctx, in_dir):
    """Recompute and print metrics from stored attempt rows."""
    body = {"in_dir": str(Path(in_dir).resolve())}
    with _client(ctx.obj["server"]) as client:
        data = _check(client.post("/reports", json=body))
    click.echo(data["formatted"])


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8700, show_default=True, type=int)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
