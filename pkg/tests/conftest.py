import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pharmonic.geometry import FlatTorus  # noqa: E402
from pharmonic.graph import VertexMap, builtin_graph  # noqa: E402
from pharmonic.solver import minimize  # noqa: E402


def torus_loop(n, seed, p=3.0, tol=1e-10, wobble=0.02):
    """A converged winding-1 map ``C_n -> FlatTorus(1, 1)`` from a perturbed start."""
    g = builtin_graph("cycle", n)
    target = FlatTorus((1.0, 1.0))
    rng = np.random.default_rng(seed)
    t = np.arange(n) / n
    vals = np.c_[
        t + wobble * rng.normal(size=n),
        0.3 + 0.1 * np.sin(2 * np.pi * t) + wobble * rng.normal(size=n),
    ]
    out = minimize(VertexMap(g, target, vals % 1.0, p), bc="free", tol=tol, max_iters=100000)
    assert out.converged
    return out.map


@pytest.fixture(scope="session")
def c16_pair():
    return torus_loop(16, 1), torus_loop(16, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
