import json
import time

import pytest
from starlette.testclient import TestClient

from vrpilot import __version__
from vrpilot.gateway import OpenAIChatBackend, RecordingBackend, ReplayBackend, ScriptedBackend, load_session
from vrpilot.errors import ConfigurationError, GatewayError
from vrpilot.prompting import ANSWER_TRIGGER, KIND_BASELINE, KIND_COT_ANSWER, KIND_COT_REASONING, REASONING_TRIGGER
from vrpilot.service import build_gateway, create_app
from vrpilot.service.schemas import GatewaySpec
from vrpilot.tasks import DEFAULT_SYSTEM_MESSAGE

GOOD_PATCH = "int f(void)\n{\n    return 1; /* safe */\n}"
BAD_PATCH = "int f(void)\n{\n    return 1;\n}"


def fenced(code: str) -> str:
    return f"```\n{code}\n```"


@pytest.fixture
def client():
    with TestClient(create_app()) as c:
        yield c


def scripted_campaign(manifest, contents, **overrides):
    body = {
        "manifest_path": str(manifest),
        "config": {"temperatures": [0.0], "feedback_iterations": 1},
        "gateway": {"kind": "scripted", "scripted_contents": contents},
    }
    body.update(overrides)
    return body


class TestHealth:
    def test_reports_ok_and_version(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok", "version": __version__}


class TestPrompts:
    def test_reasoning_stage(self, client, mini_manifest):
        resp = client.post("/prompts", json={"manifest_path": str(mini_manifest), "task_id": "mini"})
        assert resp.status_code == 200
        data = resp.json()
        assert data["kind"] == KIND_COT_REASONING
        assert data["system"] == DEFAULT_SYSTEM_MESSAGE
        assert data["text"] == (
            "Q: Fix the buffer overflow vulnerability at line(s) 3 in the following code:\n"
            "1 int f(void)\n"
            "2 {\n"
            "3     return 1;\n"
            "4 }\n"
            "A: " + REASONING_TRIGGER
        )
        assert len(data["digest"]) == 64 and set(data["digest"]) <= set("0123456789abcdef")

    def test_answer_stage_uses_filler_without_reasoning(self, client, mini_manifest):
        resp = client.post(
            "/prompts",
            json={"manifest_path": str(mini_manifest), "task_id": "mini", "stage": "answer"},
        )
        data = resp.json()
        assert data["kind"] == KIND_COT_ANSWER
        assert "<reasoning>" in data["text"]
        assert data["text"].endswith(ANSWER_TRIGGER)

    def test_answer_stage_embeds_given_reasoning(self, client, mini_manifest):
        resp = client.post(
            "/prompts",
            json={
                "manifest_path": str(mini_manifest),
                "task_id": "mini",
                "stage": "answer",
                "reasoning": "the loop never checks len",
            },
        )
        assert "the loop never checks len" in resp.json()["text"]
        assert "<reasoning>" not in resp.json()["text"]

    def test_baseline_mode(self, client, mini_manifest):
        resp = client.post(
            "/prompts",
            json={"manifest_path": str(mini_manifest), "task_id": "mini", "mode": "n.h"},
        )
        data = resp.json()
        assert data["kind"] == KIND_BASELINE
        assert data["text"] == "int f(void)\n{\n"

    def test_unknown_task_is_404(self, client, mini_manifest):
        resp = client.post("/prompts", json={"manifest_path": str(mini_manifest), "task_id": "nope"})
        assert resp.status_code == 404
        assert "nope" in resp.json()["detail"]

    def test_missing_manifest_is_400(self, client, tmp_path):
        resp = client.post(
            "/prompts", json={"manifest_path": str(tmp_path / "gone.json"), "task_id": "x"}
        )
        assert resp.status_code == 400

    def test_unknown_mode_is_400(self, client, mini_manifest):
        resp = client.post(
            "/prompts",
            json={"manifest_path": str(mini_manifest), "task_id": "mini", "mode": "zz"},
        )
        assert resp.status_code == 400


class TestValidations:
    def test_patch_text_plausible(self, client, mini_manifest):
        resp = client.post(
            "/validations",
            json={"manifest_path": str(mini_manifest), "task_id": "mini", "patch_text": GOOD_PATCH},
        )
        assert resp.status_code == 200
        data = resp.json()
        assert data["classification"] == "plausible"
        assert data["plausible"] is True
        assert [s["stage"] for s in data["stages"]] == ["compile", "functional", "security"]
        assert all(s["passed"] for s in data["stages"])
        assert data["workspace"] is None

    def test_patch_text_failing_security(self, client, mini_manifest):
        resp = client.post(
            "/validations",
            json={"manifest_path": str(mini_manifest), "task_id": "mini", "patch_text": BAD_PATCH},
        )
        data = resp.json()
        assert data["classification"] == "security_fail"
        assert data["plausible"] is False
        assert data["stages"][-1]["exit_code"] == 1

    def test_unpatched_tree_validates_as_is(self, client, mini_manifest):
        resp = client.post(
            "/validations", json={"manifest_path": str(mini_manifest), "task_id": "mini"}
        )
        assert resp.json()["classification"] == "security_fail"

    def test_patch_path_reads_file(self, client, mini_manifest, tmp_path):
        patch = tmp_path / "fix.c"
        patch.write_text(GOOD_PATCH)
        resp = client.post(
            "/validations",
            json={
                "manifest_path": str(mini_manifest),
                "task_id": "mini",
                "patch_path": str(patch),
            },
        )
        assert resp.json()["classification"] == "plausible"

    def test_both_patch_sources_rejected(self, client, mini_manifest, tmp_path):
        patch = tmp_path / "fix.c"
        patch.write_text(GOOD_PATCH)
        resp = client.post(
            "/validations",
            json={
                "manifest_path": str(mini_manifest),
                "task_id": "mini",
                "patch_path": str(patch),
                "patch_text": GOOD_PATCH,
            },
        )
        assert resp.status_code == 400
        assert "not both" in resp.json()["detail"]

    def test_keep_workspace_returns_surviving_path(self, client, mini_manifest, tmp_path):
        scratch = tmp_path / "scratch"
        scratch.mkdir()
        resp = client.post(
            "/validations",
            json={
                "manifest_path": str(mini_manifest),
                "task_id": "mini",
                "patch_text": GOOD_PATCH,
                "scratch_dir": str(scratch),
                "keep_workspace": True,
            },
        )
        workspace = resp.json()["workspace"]
        assert workspace is not None
        from pathlib import Path

        assert "safe" in (Path(workspace) / "src" / "code.c").read_text()

    def test_broken_task_is_400(self, client, mini_manifest, tmp_path):
        # point the manifest at a file that does not exist
        tasks = json.loads(mini_manifest.read_text())
        tasks[0]["vulnerable_file"] = "src/ghost.c"
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(tasks))
        resp = client.post(
            "/validations", json={"manifest_path": str(bad), "task_id": "mini"}
        )
        assert resp.status_code == 400
        assert "ghost" in resp.json()["detail"]


class TestCampaigns:
    def test_synchronous_campaign(self, client, mini_manifest, tmp_path):
        out = tmp_path / "out"
        body = scripted_campaign(
            mini_manifest,
            ["r1", fenced(BAD_PATCH), "r2", fenced(GOOD_PATCH)],
            out_dir=str(out),
        )
        resp = client.post("/campaigns", json=body)
        assert resp.status_code == 200
        status = resp.json()
        assert status["status"] == "completed"
        assert status["error"] is None
        report = status["report"]
        assert report["tasks"][0]["task_id"] == "mini"
        assert report["tasks"][0]["passed"] is True
        assert report["attempts_total"] == 2
        assert (out / "attempts.jsonl").is_file()
        assert (out / "summary.json").is_file()
        review_dirs = list((out / "review").iterdir())
        assert [d.name for d in review_dirs] == ["mini-t0.0-a1"]

        attempts = client.get(f"/campaigns/{status['id']}/attempts").json()
        assert attempts["id"] == status["id"]
        assert [r["attempt_index"] for r in attempts["rows"]] == [0, 1]

    def test_async_campaign_polls_to_completion(self, client, mini_manifest):
        body = scripted_campaign(mini_manifest, ["r", fenced(GOOD_PATCH)], wait=False)
        job_id = client.post("/campaigns", json=body).json()["id"]
        deadline = time.monotonic() + 30
        while True:
            status = client.get(f"/campaigns/{job_id}").json()
            if status["status"] != "running":
                break
            assert time.monotonic() < deadline, "campaign never finished"
            time.sleep(0.02)
        assert status["status"] == "completed"
        assert status["report"]["tasks"][0]["passed"] is True

    def test_recording_produces_a_replayable_transcript(self, client, mini_manifest, tmp_path):
        transcript = tmp_path / "session.json"
        body = scripted_campaign(mini_manifest, ["r", fenced(GOOD_PATCH)])
        body["gateway"]["record_path"] = str(transcript)
        status = client.post("/campaigns", json=body).json()
        assert status["status"] == "completed"
        session = load_session(transcript)
        assert len(session.entries) == 2
        assert status["transcript_digest"] == session.digest()

        replay_body = scripted_campaign(mini_manifest, [])
        replay_body["gateway"] = {"kind": "replay", "transcript_path": str(transcript)}
        replay_status = client.post("/campaigns", json=replay_body).json()
        assert replay_status["status"] == "completed"
        # identical metrics, modulo the wall clock
        assert replay_status["report"]["tasks"] == status["report"]["tasks"]
        assert replay_status["report"]["attempts_plausible"] == status["report"]["attempts_plausible"]

    def test_failed_campaign_reports_error(self, client, mini_manifest, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        (out / "attempts.jsonl").write_text("")
        body = scripted_campaign(mini_manifest, ["r", fenced(GOOD_PATCH)], out_dir=str(out))
        status = client.post("/campaigns", json=body).json()
        assert status["status"] == "failed"
        assert "--force" in status["error"]

    def test_empty_manifest_is_400(self, client, tmp_path):
        manifest = tmp_path / "empty.json"
        manifest.write_text("[]")
        resp = client.post("/campaigns", json=scripted_campaign(manifest, ["r"]))
        assert resp.status_code == 400
        assert "no tasks" in resp.json()["detail"]

    def test_unknown_campaign_is_404(self, client):
        assert client.get("/campaigns/missing").status_code == 404
        assert client.get("/campaigns/missing/attempts").status_code == 404

    def test_broken_task_lands_in_task_errors(self, client, mini_manifest, tmp_path):
        tasks = json.loads(mini_manifest.read_text())
        tasks[0]["vulnerable_file"] = "src/ghost.c"
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(tasks))
        status = client.post("/campaigns", json=scripted_campaign(bad, ["r"])).json()
        assert status["status"] == "completed"
        assert status["report"]["empty"] is True
        [(task_id, message)] = status["report"]["task_errors"]
        assert task_id == "mini" and "ghost" in message


class TestReports:
    def test_recompute_from_exported_rows(self, client, mini_manifest, tmp_path):
        out = tmp_path / "out"
        body = scripted_campaign(
            mini_manifest, ["r1", fenced(BAD_PATCH), "r2", fenced(GOOD_PATCH)], out_dir=str(out)
        )
        campaign_report = client.post("/campaigns", json=body).json()["report"]
        resp = client.post("/reports", json={"in_dir": str(out)})
        assert resp.status_code == 200
        data = resp.json()
        assert data["report"]["attempts_total"] == campaign_report["attempts_total"]
        assert data["report"]["tasks"][0]["passed"] is True
        assert "mini: pass=yes" in data["formatted"]

    def test_missing_directory_is_400(self, client, tmp_path):
        resp = client.post("/reports", json={"in_dir": str(tmp_path / "void")})
        assert resp.status_code == 400


class TestBuildGateway:
    def test_replay_requires_transcript(self):
        with pytest.raises(ConfigurationError, match="transcript_path"):
            build_gateway(GatewaySpec(kind="replay"))

    def test_scripted_requires_contents(self):
        with pytest.raises(GatewayError):
            build_gateway(GatewaySpec(kind="scripted"))

    def test_scripted_backend(self):
        backend, recorder = build_gateway(GatewaySpec(kind="scripted", scripted_contents=["a"]))
        assert isinstance(backend, ScriptedBackend)
        assert recorder is None

    def test_record_path_wraps_backend(self, tmp_path):
        spec = GatewaySpec(kind="scripted", scripted_contents=["a"], record_path=str(tmp_path / "t.json"))
        backend, recorder = build_gateway(spec)
        assert isinstance(backend, RecordingBackend)
        assert backend is recorder

    def test_replay_backend(self, tmp_path, monkeypatch):
        # record one exchange through the scripted backend, then replay it
        backend, recorder = build_gateway(
            GatewaySpec(kind="scripted", scripted_contents=["hello"], record_path=str(tmp_path / "t.json"))
        )
        from vrpilot.gateway import ChatRequest

        backend.complete(
            ChatRequest(model_name="m", system="s", turns=(("user", "hi"),), temperature=0.0)
        )
        recorder.save(tmp_path / "t.json")
        replay, _ = build_gateway(GatewaySpec(kind="replay", transcript_path=str(tmp_path / "t.json")))
        assert isinstance(replay, ReplayBackend)

    def test_live_backend_needs_api_key(self, monkeypatch):
        monkeypatch.delenv("VRPILOT_API_KEY", raising=False)
        with pytest.raises(GatewayError, match="VRPILOT_API_KEY"):
            build_gateway(GatewaySpec(kind="live"))

    def test_live_backend_uses_base_url(self, monkeypatch):
        monkeypatch.setenv("VRPILOT_API_KEY", "k")
        backend, _ = build_gateway(GatewaySpec(kind="live", base_url="http://mock.internal/v1"))
        assert isinstance(backend, OpenAIChatBackend)
        assert backend.base_url.rstrip("/") == "http://mock.internal/v1"
