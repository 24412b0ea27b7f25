import sys

import numpy as np
import pytest
from hypothesis import strategies as st

from ltsde.measure import Atom, PiecewiseConstantDensity, SignedMeasure


@st.composite
def admissible_measures(draw, max_atoms=4, max_pieces=4, bound=0.95):
    """Random Le Gall-admissible measures: atoms with |w| < 1 plus a step density."""
    n_atoms = draw(st.integers(0, max_atoms))
    locs = draw(st.lists(st.floats(-5, 5, allow_nan=False), min_size=n_atoms,
                         max_size=n_atoms, unique=True))
    weights = draw(st.lists(st.floats(-bound, bound, allow_nan=False), min_size=n_atoms,
                            max_size=n_atoms))
    n_pieces = draw(st.integers(0, max_pieces))
    continuous = PiecewiseConstantDensity()
    if n_pieces:
        bps = sorted(draw(st.lists(st.floats(-5, 5, allow_nan=False), min_size=n_pieces + 1,
                                   max_size=n_pieces + 1, unique=True)))
        if all(b - a > 1e-6 for a, b in zip(bps, bps[1:])):
            vals = draw(st.lists(st.floats(-2, 2, allow_nan=False), min_size=n_pieces,
                                 max_size=n_pieces))
            continuous = PiecewiseConstantDensity(tuple(bps), tuple(vals))
    atoms = tuple(Atom(l, w) for l, w in zip(locs, weights))
    return SignedMeasure(atoms=atoms, continuous=continuous)


def random_measures(count, seed=7):
    """Deterministic list of random admissible measures (atoms plus densities)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        k = int(rng.integers(1, 5))
        locs = np.sort(rng.choice(np.linspace(-4, 4, 81), size=k, replace=False))
        weights = rng.uniform(-0.95, 0.95, size=k)
        p = int(rng.integers(0, 4))
        continuous = PiecewiseConstantDensity()
        if p:
            bps = np.sort(rng.choice(np.linspace(-4.05, 4.05, 82), size=p + 1, replace=False))
            continuous = PiecewiseConstantDensity(tuple(bps), tuple(rng.uniform(-2, 2, size=p)))
        out.append(SignedMeasure(atoms=tuple(Atom(float(l), float(w))
                                             for l, w in zip(locs, weights)),
                                 continuous=continuous))
    return out


@pytest.fixture
def example2_measure():
    return SignedMeasure.dirac(0.5)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
