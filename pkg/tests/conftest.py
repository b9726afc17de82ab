import sys
import numpy as np
import pytest

from cosnet.core import ClipTrack


def make_track(features, f_clip=16, annotations=None, **kw):
    return ClipTrack(np.asarray(features, dtype=np.float64), f_clip=f_clip, annotations=annotations, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
