import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS = pytest.StashKey[dict]()


@dataclass
class Verdict:
    number: int
    title: str
    passed: bool | None = None
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number}: {self.title} -- {self.detail}"


class Recorder:
    def __init__(self, verdict: Verdict):
        self.verdict = verdict

    def __call__(self, passed: bool, detail: str) -> bool:
        self.verdict.passed = bool(passed)
        self.verdict.detail = detail
        print(self.verdict.line())
        return bool(passed)


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict; a test that dies early records a failure."""
    marker = request.node.get_closest_marker("criterion")
    verdict = Verdict(*marker.args)
    yield Recorder(verdict)
    if verdict.passed is None:
        verdict.passed = False
        verdict.detail = "did not complete"
    request.config.stash[_RESULTS][verdict.number] = verdict


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number].line())
