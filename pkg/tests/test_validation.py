import pytest

from vrpilot.errors import ConfigurationError
from vrpilot.patching import Workspace, stage_workspace
from vrpilot.validation import (
    CLASS_COMPILE_ERROR,
    CLASS_FUNCTIONAL_FAIL,
    CLASS_PLAUSIBLE,
    CLASS_SECURITY_FAIL,
    STAGE_COMPILE,
    TRUNCATION_MARKER,
    run_stage,
    substitute_command,
    validate,
)


@pytest.fixture()
def workspace(make_task, tmp_path):
    return stage_workspace(make_task(), 0, tmp_path / "scratch")


class TestRunStage:
    def test_zero_exit_passes(self, workspace):
        result = run_stage("true", workspace, 10, STAGE_COMPILE)
        assert result.passed and result.exit_code == 0 and not result.timed_out

    def test_nonzero_exit_fails(self, workspace):
        result = run_stage("exit 3", workspace, 10, STAGE_COMPILE)
        assert not result.passed and result.exit_code == 3

    def test_cwd_is_workspace_root(self, workspace):
        result = run_stage("pwd", workspace, 10, STAGE_COMPILE)
        assert result.stdout.strip() == str(workspace.root)

    def test_workspace_placeholder_substituted(self, workspace):
        assert substitute_command("ls {workspace}", workspace) == f"ls {workspace.root}"
        result = run_stage("echo {workspace}", workspace, 10, STAGE_COMPILE)
        assert result.stdout.strip() == str(workspace.root)

    def test_env_additions_visible(self, workspace):
        result = run_stage('echo "$PROBE"', workspace, 10, STAGE_COMPILE, env={"PROBE": "xyzzy"})
        assert result.stdout.strip() == "xyzzy"

    def test_timeout_fails_the_stage(self, workspace):
        result = run_stage("sleep 5", workspace, 1, STAGE_COMPILE)
        assert result.timed_out and not result.passed and result.exit_code == -1

    def test_output_capped_with_marker(self, workspace):
        command = "python3 -c 'import sys; sys.stderr.write(\"x\" * 5000)'"
        result = run_stage(command, workspace, 10, STAGE_COMPILE, output_cap=1000)
        assert result.stderr.endswith(TRUNCATION_MARKER)
        assert len(result.stderr) == 1000 + len(TRUNCATION_MARKER)

    def test_output_under_cap_untouched(self, workspace):
        result = run_stage("echo hi", workspace, 10, STAGE_COMPILE)
        assert result.stdout == "hi\n"

    def test_empty_command_is_configuration_error(self, workspace):
        with pytest.raises(ConfigurationError, match="empty command"):
            run_stage("   ", workspace, 10, STAGE_COMPILE)

    def test_unspawnable_command_is_configuration_error(self, tmp_path):
        ghost = Workspace(root=tmp_path / "gone", task_id="t", attempt_index=0)
        with pytest.raises(ConfigurationError, match="failed to spawn"):
            run_stage("true", ghost, 10, STAGE_COMPILE)


class TestValidate:
    def test_compile_failure_short_circuits(self, make_task, tmp_path):
        task = make_task(build="false", functional="echo SHOULD_NOT_RUN", security="true")
        workspace = stage_workspace(task, 0, tmp_path / "scratch")
        outcome = validate(workspace, task)
        assert outcome.classification == CLASS_COMPILE_ERROR
        assert [s.stage for s in outcome.stages] == ["compile"]
        assert not outcome.plausible

    def test_functional_failure_stops_before_security(self, make_task, tmp_path):
        task = make_task(build="true", functional="false", security="echo SHOULD_NOT_RUN")
        workspace = stage_workspace(task, 0, tmp_path / "scratch")
        outcome = validate(workspace, task)
        assert outcome.classification == CLASS_FUNCTIONAL_FAIL
        assert [s.stage for s in outcome.stages] == ["compile", "functional"]

    def test_security_failure_runs_all_three(self, make_task, tmp_path):
        task = make_task(build="true", functional="true", security="false")
        workspace = stage_workspace(task, 0, tmp_path / "scratch")
        outcome = validate(workspace, task)
        assert outcome.classification == CLASS_SECURITY_FAIL
        assert [s.stage for s in outcome.stages] == ["compile", "functional", "security"]

    def test_all_pass_is_plausible(self, make_task, tmp_path):
        task = make_task()
        workspace = stage_workspace(task, 0, tmp_path / "scratch")
        outcome = validate(workspace, task)
        assert outcome.classification == CLASS_PLAUSIBLE
        assert outcome.plausible
        assert all(s.passed for s in outcome.stages)

    def test_task_env_reaches_commands(self, make_task, tmp_path):
        task = make_task(build='test "$PROBE" = on', env={"PROBE": "on"})
        workspace = stage_workspace(task, 0, tmp_path / "scratch")
        assert validate(workspace, task).classification == CLASS_PLAUSIBLE
