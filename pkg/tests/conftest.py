import pytest

from slipwalk import ScenarioConfig, TerrainProfile, run


@pytest.fixture(scope="session")
def flat_log():
    """Four seconds of flat-ground walking at 0.5 m/s."""
    return run(ScenarioConfig(name="flat_short", terrain=TerrainProfile(), duration=4.0))


# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
