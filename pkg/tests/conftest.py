import os
import sys
from pathlib import Path

# the OT oracle library probes every array backend on import; keep it to numpy
for _backend in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")

sys.path.insert(0, str(Path(__file__).parent))

import numpy as np
import pytest

from transfer_explore import TabularMdp
from oracles import random_mdp_arrays


@pytest.fixture
def chain():
    """Three states in a row, deterministic moves, +1 for entering the last (terminal) one."""
    P = np.zeros((3, 2, 3))
    # action 0 = left, action 1 = right
    P[0, 0, 0] = 1
    P[0, 1, 1] = 1
    P[1, 0, 0] = 1
    P[1, 1, 2] = 1
    P[2, :, 2] = 1
    R = np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    return TabularMdp(P, R, 0.9, terminal=[False, False, True])


@pytest.fixture
def make_mdp():
    def make(seed, S, A, gamma=0.9, **kw):
        P, R, g, term = random_mdp_arrays(np.random.default_rng(seed), S, A, gamma, **kw)
        return TabularMdp(P, R, g, terminal=term)

    return make


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """``acceptance(number, ok, detail)`` records one criterion verdict for the summary."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
