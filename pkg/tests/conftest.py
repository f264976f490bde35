import pytest
from hypothesis import HealthCheck, settings

from wdamf.signals import JammerParams, WaveformParams

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    """Store a one-line verdict that is echoed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> None:
        _CRITERIA[number] = (bool(ok), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def wave():
    """100 us / 6 MHz chirp sampled at 15 MHz."""
    return WaveformParams(100e-6, 6e6, 15e6)


@pytest.fixture(scope="session")
def isrj():
    """50 kHz repeater at duty 0.2, aligned with the echo."""
    return JammerParams(period=20e-6, duty=0.2, delay=0.0)
