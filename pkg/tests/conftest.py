import pytest

from ddsflow.system import System

ACCEPTANCE = {
    1: "evolution endurance (30 versions, coexisting instances)",
    2: "migration verdict agrees with execution enumeration",
    3: "replay reproduces live state byte-for-byte",
    4: "live pipeline reconfiguration with golden outputs",
    5: "graph validator catalog",
    6: "expression goldens and parse/print round trip",
    7: "crash consistency of the pipeline",
}
RESULTS: dict[int, tuple[bool, str]] = {}


class Crash(BaseException):
    """Simulated process death raised from a fault point."""


class Faults:
    """Counts fault-point calls; raises Crash on call number ``at``."""

    def __init__(self, at=None):
        self.calls = 0
        self.at = at
        self.points = []

    def __call__(self, point):
        self.calls += 1
        self.points.append(point)
        if self.calls == self.at:
            raise Crash(point)


@pytest.fixture
def acceptance():
    def record(number, passed, detail=""):
        RESULTS[number] = (passed, detail)
        print(f"ACCEPTANCE {number} {'PASS' if passed else 'FAIL'}: {ACCEPTANCE[number]} {detail}".rstrip())
    return record


@pytest.fixture
def system():
    return System()


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in ACCEPTANCE.items():
        if number in RESULTS:
            passed, detail = RESULTS[number]
            line = f"{number}. {'PASS' if passed else 'FAIL'}  {title}"
            if detail:
                line += f"  ({detail})"
        else:
            line = f"{number}. NOT RUN  {title}"
        terminalreporter.write_line(line)
