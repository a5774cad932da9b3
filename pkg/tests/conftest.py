from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bbc.biometrics import Fleet  # noqa: E402
from bbc.sim import Mode, Scenario, run  # noqa: E402

REPO = Path(__file__).resolve().parents[1]
SCENARIOS = REPO / "scenarios"

# Dense enough that every vehicle is heard every round.
FIXTURE_SCENARIO = Scenario(seed=3, n_vehicles=6, n_infra=2, road_length=1000.0, radio_range=400.0, rounds=50)


@pytest.fixture(scope="session")
def fixture_run():
    """50-round honest run; its chain has exactly 50 post-genesis blocks."""
    result = run(FIXTURE_SCENARIO)
    assert result.metrics["final_height"] == "50"
    return result


@pytest.fixture(scope="session")
def fixture_chain(fixture_run):
    return fixture_run.chains[0]


@pytest.fixture(scope="session")
def registry(fixture_run):
    return fixture_run.world.registry


@pytest.fixture(scope="session")
def small_fleet():
    return Fleet(seed=99, size=5)


@pytest.fixture(scope="session")
def adversary_runs():
    """Three attack modes on 3 of 10 vehicles, five seeds each."""
    runs = {}
    for mode in (Mode.FORGE_SIGNATURE, Mode.INFLATE_CLAIM, Mode.REPLAY):
        for seed in range(5):
            scenario = Scenario(
                seed=100 + seed,
                n_vehicles=10,
                n_infra=2,
                road_length=2000.0,
                radio_range=400.0,
                rounds=25,
                adversaries={1: mode, 4: mode, 7: mode},
            )
            runs[(mode, seed)] = run(scenario)
    return runs


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
