import os
from pathlib import Path

import numpy as np
import pytest

from mpsboson.models import aklt_state, blbq, heisenberg_staggered, neel_state
from mpsboson.mps import tangent_basis
from mpsboson.saddle import find_saddle

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def cache_dir():
    """Persistent cache for the large-D reference energies."""
    return Path(os.environ.get("MPSBOSON_CACHE", ROOT / ".cache" / "mpsboson"))


@pytest.fixture(scope="session")
def aklt():
    mps = aklt_state()
    return mps, tangent_basis(mps), blbq(1 / 3)


@pytest.fixture(scope="session")
def blbq633():
    model = blbq(0.633)
    mps = find_saddle(model, 2, seed=7, tol=1e-8).mps
    return mps, tangent_basis(mps), model


@pytest.fixture(scope="session")
def neel02():
    model = heisenberg_staggered(0.2)
    mps = neel_state(2)
    return mps, tangent_basis(mps), model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the run
CRITERIA = {}


def record_criterion(number, ok, detail):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
