import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("psfsr", max_examples=25, deadline=None)
settings.load_profile("psfsr")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gaussian_blob(shape, center, sigma):
    ii, jj = np.indices(shape, dtype=np.float64)
    return np.exp(-((ii - center[0]) ** 2 + (jj - center[1]) ** 2) / (2 * sigma ** 2))


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdicts (one line per criterion) after the run."""
    import sys

    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(verdicts):
        terminalreporter.write_line(verdicts[n])
