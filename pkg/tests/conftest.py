import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

E = float(np.e)


@pytest.fixture
def half():
    from npconvex import FiniteProbSpace

    return FiniteProbSpace([0.5, 0.5], labels=("0", "1"))


def pytest_terminal_summary(terminalreporter):
    """Repeat the per-criterion verdict lines, which test capture would otherwise hide."""
    import sys

    lines = [line for name, mod in list(sys.modules.items()) if name.endswith("test_acceptance") for line in getattr(mod, "_LINES", [])]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
