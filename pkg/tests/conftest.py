import os
import subprocess
import sys

import pytest
from hypothesis import settings

from spdelab.kernels import available_backends

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(params=sorted(available_backends()))
def backend(request):
    """Each importable kernel module in turn."""
    return available_backends()[request.param]


def run_python(code: str, **env) -> subprocess.CompletedProcess:
    """Run a snippet in a fresh interpreter with extra environment variables."""
    full_env = dict(os.environ, **env)
    return subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, env=full_env, check=False
    )


acceptance_lines: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one summary line per acceptance criterion."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        acceptance_lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
