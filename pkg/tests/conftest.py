import numpy as np
import pytest

from polarmetric.metric import load_model


@pytest.fixture(scope="session")
def models():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = load_model(name)
        return cache[name]
    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance results, filled by tests/test_acceptance.py and printed at the end of the run
ACCEPTANCE: dict[int, tuple[str, str, float]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, verdict, secs = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {verdict}  {secs:6.1f} s  {title}")
