import math

import numpy as np
import pytest
from hypothesis import given, settings
from scipy import integrate

from conftest import admissible_measures
from ltsde.funcdsl import Constant, Exponential, PiecewiseFunction, parse
from ltsde.measure import Atom, InadmissibleMeasureError, SignedMeasure
from ltsde.models import example1_phi
from ltsde.transform import (TransformError, build_basschen_pair, build_f_nu, build_pair,
                             build_psi, jump_ratio_check)


def f_nu_oracle(measure, x):
    """Direct evaluation: plain loop over atoms and quadrature of the density."""
    dens = measure.continuous
    mass = 0.0
    for lo, hi, v in zip(dens.breakpoints, dens.breakpoints[1:], dens.values):
        mass += v * max(0.0, min(x, hi) - lo)
    prod = 1.0
    for a in measure.atoms:
        if a.location <= x:
            prod *= (1 - a.weight) / (1 + a.weight)
    return math.exp(-2 * mass) * prod


def test_f_nu_example2():
    f = build_f_nu(SignedMeasure.dirac(0.5))
    assert f.segments[0].form == Constant(1.0)
    assert f(0.0) == pytest.approx(1 / 3, rel=1e-15)
    assert f(-1e-300) == 1.0


def test_f_nu_zero_measure():
    assert build_f_nu(SignedMeasure()) == PiecewiseFunction.constant(1.0)


def test_f_nu_unit_density():
    f = build_f_nu(SignedMeasure.from_density([0.0, 1.0], [1.0]))
    x = np.array([-1.0, 0.0, 0.3, 0.999, 1.0, 4.0])
    expected = np.where(x < 0, 1.0, np.where(x < 1, np.exp(-2 * x), math.exp(-2)))
    np.testing.assert_allclose(f(x), expected, rtol=1e-15)


def test_f_nu_rejects_unit_atom():
    with pytest.raises(InadmissibleMeasureError):
        build_f_nu(SignedMeasure.dirac(-1.0))


@settings(max_examples=60, deadline=None)
@given(admissible_measures())
def test_f_nu_matches_direct_formula(nu):
    f = build_f_nu(nu)
    pts = np.concatenate((nu.breakpoints(), np.linspace(-6, 6, 31)))
    for x in pts:
        assert f(x) == pytest.approx(f_nu_oracle(nu, float(x)), rel=1e-12)


def test_pair_example2():
    pair = build_pair(parse("piece x>=0: 1/3; piece x<0: 1"))
    x = np.array([-2.0, -0.5, 0.0, 0.6, 9.0])
    np.testing.assert_allclose(pair.map(x), np.where(x < 0, x, x / 3), rtol=1e-15)
    y = np.array([-1.0, 0.0, 0.2, 3.0])
    np.testing.assert_allclose(pair.inverse(y), np.where(y < 0, y, 3 * y), rtol=1e-15)


def test_pair_identity():
    pair = build_pair(PiecewiseFunction.constant(1.0))
    x = np.linspace(-5, 5, 11)
    assert np.array_equal(pair.map(x), x)
    assert np.array_equal(pair.inverse(x), x)


def test_pair_exponential_increment():
    pair = build_pair(build_f_nu(SignedMeasure.from_density([0.0, 1.0], [1.0])))
    for x in (0.1, 0.5, 0.9):
        assert pair.map(x) == pytest.approx(-math.expm1(-2 * x) / 2, rel=1e-14)
    assert pair.map(3.0) == pytest.approx(-math.expm1(-2) / 2 + 2 * math.exp(-2), rel=1e-14)


def test_pair_rejects_bad_densities():
    with pytest.raises(TransformError):
        build_pair(parse("piece x<0: 1; piece x>=0: 0"))
    with pytest.raises(TransformError):
        build_pair(parse("piece x<0: 1; piece x>=0: exp(-x)"))
    with pytest.raises(TransformError):
        build_pair(parse("piece all: 1/(1+x^2)"))


@settings(max_examples=60, deadline=None)
@given(admissible_measures())
def test_map_matches_quadrature(nu):
    f = build_f_nu(nu)
    pair = build_pair(f)
    pts = np.union1d([0.0], nu.breakpoints())
    for x in np.linspace(-6, 6, 13):
        # integrate piece by piece so the quadrature never straddles a jump
        lo, hi = sorted((0.0, float(x)))
        cuts = [lo, *[b for b in pts if lo < b < hi], hi]
        val = sum(integrate.quad(lambda t: float(f(t)), a, b, epsabs=0, epsrel=1e-13)[0]
                  for a, b in zip(cuts, cuts[1:]))
        expected = val if x >= 0 else -val
        assert pair.map(x) == pytest.approx(expected, rel=1e-10, abs=1e-13)


@settings(max_examples=40, deadline=None)
@given(admissible_measures())
def test_inverse_roundtrip_and_monotone(nu):
    pair = build_pair(build_f_nu(nu))
    x = np.linspace(-50, 50, 10_000)
    y = pair.map(x)
    assert np.all(np.diff(y) > 0)
    back = pair.inverse(y)
    # one ulp of y moves x by spacing(y)/f(x); steep measures can exceed 1e-12 that way.
    # map and inverse each round, so allow 2 ulps apiece
    def floor(x, y):
        return 4 * np.spacing(np.abs(y)) / np.minimum(pair.density(x), pair.density_left(x))

    assert np.all(np.abs(back - x) <= 1e-12 * (1 + np.abs(x)) + floor(x, y))
    # breakpoints map exactly onto the inverse table
    for b in nu.breakpoints():
        yb = pair.map(b)
        assert abs(pair.inverse(yb) - b) <= 1e-12 * (1 + abs(b)) + floor(b, yb)


def test_inverse_tolerance_on_fixture():
    pair = build_pair(build_f_nu(SignedMeasure(atoms=(Atom(-1.0, 0.7), Atom(2.0, -0.4)),
                                               continuous=SignedMeasure.from_density(
                                                   [-3.0, 0.5, 4.0], [0.8, -0.3]).continuous)))
    x = np.random.default_rng(7).uniform(-50, 50, 10_000)
    assert np.all(np.abs(pair.inverse(pair.map(x)) - x) <= 1e-12 * (1 + np.abs(x)))


def test_basschen_inverse_tolerance_on_fixture():
    nu = SignedMeasure(atoms=(Atom(-1.0, 0.4), Atom(2.0, -0.6)),
                       continuous=SignedMeasure.from_density([-3.0, 0.5, 4.0], [0.8, -0.3]).continuous)
    pair = build_basschen_pair(nu)
    x = np.random.default_rng(8).uniform(-50, 50, 10_000)
    assert np.all(np.abs(pair.inverse(pair.map(x)) - x) <= 1e-12 * (1 + np.abs(x)))


def test_subnormal_rate_map_is_increasing():
    pair = build_pair(build_f_nu(SignedMeasure.from_density([0.0, 1.0], [5e-324])))
    x = np.linspace(-2, 2, 401)
    assert np.all(np.diff(pair.map(x)) > 0)
    np.testing.assert_allclose(pair.map(x), x, rtol=1e-15, atol=0)


def test_psi_example1():
    alpha = 0.5
    nu = SignedMeasure.dirac(alpha)
    psi = build_psi(example1_phi(alpha), build_pair(build_f_nu(nu)))
    y = np.linspace(-5, 5, 1001)
    np.testing.assert_allclose(psi(y), np.exp(-np.abs(y)), rtol=1e-12)
    assert psi.continuous
    assert psi.diagnostics()["psi_continuous"] is True


@pytest.mark.parametrize("alpha", [0.5, -0.5, 0.25])
def test_psi_example2(alpha):
    r = (1 - alpha) / (1 + alpha)
    psi = build_psi(PiecewiseFunction.constant(1.0), build_pair(build_f_nu(SignedMeasure.dirac(alpha))))
    assert psi(-0.1) == 1.0
    assert psi(0.0) == pytest.approx(r, rel=1e-15)
    d = psi.discontinuities()
    assert [p.y for p in d] == [0.0]
    assert d[0].liminf_sq == pytest.approx(min(1.0, r * r), rel=1e-15)
    diag = psi.diagnostics()
    assert diag["liminf_positive"] and not diag["psi_continuous"]


def test_psi_identity():
    psi = build_psi(PiecewiseFunction.constant(1.0), build_pair(build_f_nu(SignedMeasure())))
    assert np.array_equal(psi(np.linspace(-3, 3, 7)), np.ones(7))


def test_basschen_quarter_atom():
    pair = build_basschen_pair(SignedMeasure.dirac(0.25))
    x = np.linspace(-4, 4, 81)
    np.testing.assert_allclose(pair.map(x), np.where(x <= 0, x, 0.5 * x), rtol=1e-12, atol=0)
    # left derivative picks the value left of the atom
    assert pair.density_left(0.0) == 1.0
    assert pair.density(0.0) == pytest.approx(0.5, rel=1e-15)


def test_basschen_zero_measure_is_identity():
    pair = build_basschen_pair(SignedMeasure())
    x = np.linspace(-3, 3, 13)
    assert np.array_equal(pair.map(x), x)


def test_basschen_rejects_half_atom():
    with pytest.raises(InadmissibleMeasureError):
        build_basschen_pair(SignedMeasure.dirac(0.5))


@settings(max_examples=60, deadline=None)
@given(admissible_measures(max_atoms=0))
def test_basschen_matches_legall_when_atomless(nu):
    a = build_pair(build_f_nu(nu))
    b = build_basschen_pair(nu)
    x = np.linspace(-7, 7, 701)
    np.testing.assert_allclose(b.density(x), a.density(x), rtol=1e-12)
    np.testing.assert_allclose(b.map(x), a.map(x), rtol=1e-12, atol=1e-14)


def test_jump_example2():
    nu = SignedMeasure.dirac(0.5)
    report = jump_ratio_check(build_f_nu(nu), nu)
    assert report.ok
    (atom,) = report.atoms
    assert atom.jump == pytest.approx(-2 / 3, rel=1e-15)
    assert atom.expected == pytest.approx(-2 / 3, rel=1e-15)


def test_jump_zero_measure_vacuous():
    report = jump_ratio_check(PiecewiseFunction.constant(1.0), SignedMeasure())
    assert report.ok and report.atoms == ()


def test_jump_density_log_derivative():
    nu = SignedMeasure.from_density([0.0, 2.0], [0.7])
    assert jump_ratio_check(build_f_nu(nu), nu).ok


def test_jump_detects_wrong_function():
    nu = SignedMeasure.dirac(0.5)
    assert not jump_ratio_check(parse("piece x<0: 1; piece x>=0: 0.5"), nu).ok
    dens = SignedMeasure.from_density([0.0, 1.0], [1.0])
    wrong = PiecewiseFunction.from_forms([0.0, 1.0], [Constant(1.0), Exponential(1.0, 0.0, -1.0),
                                                      Constant(math.exp(-1))])
    assert not jump_ratio_check(wrong, dens).ok


@settings(max_examples=100, deadline=None)
@given(admissible_measures())
def test_jump_identity_random(nu):
    assert jump_ratio_check(build_f_nu(nu), nu).ok
