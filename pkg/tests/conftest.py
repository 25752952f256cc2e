import json
import shutil
from pathlib import Path

import pytest

from vrpilot.tasks import RepairTask, load_manifest

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

requires_gcc = pytest.mark.skipif(shutil.which("gcc") is None, reason="needs a C compiler")


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def toy_manifest_path() -> Path:
    return FIXTURES / "manifest.json"


@pytest.fixture()
def toy_task(toy_manifest_path):
    return load_manifest(toy_manifest_path)[0]


@pytest.fixture()
def mini_manifest(tmp_path):
    """A one-task manifest whose validation stages need only the shell.

    The security stage greps for a marker string, so a patch containing
    "safe" is plausible and anything else fails security.
    """
    proj = tmp_path / "proj"
    (proj / "src").mkdir(parents=True)
    (proj / "src" / "code.c").write_text("int f(void)\n{\n    return 1;\n}\n")
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps([
        {
            "id": "mini",
            "project_root": "proj",
            "vulnerable_file": "src/code.c",
            "function_span": [1, 4],
            "vulnerable_lines": [3],
            "vulnerability_description": "buffer overflow",
            "build_command": "true",
            "functional_test_command": "true",
            "security_test_command": "grep -q safe src/code.c",
            "test_failure_pattern": "FAIL (\\w+)",
            "timeout_seconds": 10,
        }
    ]))
    return manifest


@pytest.fixture()
def make_task(tmp_path):
    """Factory for small synthetic tasks backed by a real directory tree.

    Commands default to no-ops so orchestration tests stay fast; override
    them to drive specific stage outcomes.
    """
    counter = iter(range(10_000))

    def factory(
        source: str = "int f(void)\n{\n    return 1;\n}\n",
        span: tuple[int, int] = (1, 4),
        vulnerable: tuple[int, ...] = (3,),
        build: str = "true",
        functional: str = "true",
        security: str = "true",
        pattern: str = r"FAIL (\w+)",
        timeout: int = 10,
        env: dict | None = None,
        language: str = "c",
        description: str = "buffer overflow",
    ) -> RepairTask:
        n = next(counter)
        root = tmp_path / f"proj{n}"
        (root / "src").mkdir(parents=True)
        (root / "src" / "code.c").write_text(source, encoding="utf-8")
        return RepairTask(
            id=f"synth{n}",
            project_root=root,
            vulnerable_file="src/code.c",
            function_span=span,
            vulnerable_lines=tuple(vulnerable),
            vulnerability_description=description,
            build_command=build,
            functional_test_command=functional,
            security_test_command=security,
            test_failure_pattern=pattern,
            timeout_seconds=timeout,
            language_hint=language,
            env=dict(env or {}),
        )

    return factory
