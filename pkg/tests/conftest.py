"""Shared fixtures: acceptance-criterion reporting and cached experiment runs."""

import dataclasses
import time

import pytest

from bvm_lab.harness import default_config, run

_CRITERION_LINES: list[tuple[int, str]] = []


@pytest.fixture(scope="session")
def criterion():
    """Record one pass/fail line per acceptance criterion.

    The lines are echoed immediately (visible with -s or on failure) and
    repeated in a terminal summary section so a plain ``pytest -v`` run
    shows them too.
    """

    def record(number: int, passed: bool, detail: str) -> None:
        verdict = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d}: {verdict} - {detail}"
        _CRITERION_LINES.append((number, line))
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERION_LINES):
            terminalreporter.write_line(line)


class _LabCache:
    """Runs each experiment at its default config once, on first request."""

    def __init__(self, root):
        self.root = root
        self.results = {}
        self.elapsed = {}

    def get(self, name):
        if name not in self.results:
            config = dataclasses.replace(
                default_config(name), out_dir=str(self.root / name)
            )
            started = time.time()
            self.results[name] = run(config, jobs=1)
            self.elapsed[name] = time.time() - started
        return self.results[name]

    def rows(self, name):
        return self.get(name).rows


@pytest.fixture(scope="session")
def lab(tmp_path_factory):
    return _LabCache(tmp_path_factory.mktemp("acceptance"))
