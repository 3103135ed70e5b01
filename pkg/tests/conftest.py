import json
from importlib import resources
from pathlib import Path

import pytest

from platoon_hinf.plant import FeedbackGains, vehicle_model
from platoon_hinf.topology import load_topology

DATA = Path(str(resources.files("platoon_hinf") / "data"))
REF_K = (2.122, 3.425, 2.501)


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def graph_a():
    return load_topology(DATA / "test_a.json")


@pytest.fixture(scope="session")
def graph_b():
    return load_topology(DATA / "test_b.json")


@pytest.fixture(scope="session")
def model():
    return vehicle_model(0.5)


@pytest.fixture(scope="session")
def ref_gains():
    return FeedbackGains(*REF_K, c=0.6680)


def load_json(path):
    return json.loads(Path(path).read_text())


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the summary is printed at session end."""

    def record(number: int, passed: bool, detail: str) -> bool:
        _ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
