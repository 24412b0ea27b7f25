"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in the
terminal summary.  ``python tests/test_acceptance.py`` runs the same checks as
a script.  The Monte Carlo criteria take a few minutes on one core.
"""

from __future__ import annotations

import math
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings

from conftest import admissible_measures
from ltsde.funcdsl import PiecewiseFunction
from ltsde.measure import SignedMeasure
from ltsde.models import Model, builtin_model, example1_phi, example_payoff
from ltsde.montecarlo import (BUILTIN_PAYOFFS, Quadratic, estimate_payoff, fit_rate, fittable,
                              ks_critical_value, ks_distance, reference_value, sample_mean_se,
                              synthetic_curve, weak_error_curve)
from ltsde.rng import RngSpec
from ltsde.transform import build_basschen_pair, build_f_nu, build_pair, build_psi, jump_ratio_check

SEED = 20240601
RESULTS: list[str] = []
EPS = np.finfo(float).eps


def report(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def max_rel_or_abs(a, b):
    # relative where the target is nonzero, absolute at exact zeros
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.where(b == 0.0, 1.0, np.abs(b))
    return float(np.max(np.abs(a - b) / scale))


# ---------------------------------------------------------------------------
# exact criteria


def test_transform_fixtures():
    worst = 0.0
    x = np.linspace(-10, 10, 2001)
    for alpha in (0.25, 0.5, -0.5):
        r = (1 - alpha) / (1 + alpha)
        f = build_f_nu(SignedMeasure.dirac(alpha))
        worst = max(worst, rel_err(f(x), np.where(x >= 0, r, 1.0)))
        worst = max(worst, rel_err(f.eval_left(0.0), 1.0))
        pair = build_pair(f)
        worst = max(worst, max_rel_or_abs(pair.map(x), np.where(x >= 0, r * x, x)))
        worst = max(worst, max_rel_or_abs(pair.inverse(x), np.where(x >= 0, x / r, x)))
    report("transform fixtures (alpha in {0.25, 0.5, -0.5})", worst <= 1e-12,
           f"max relative error {worst:.2e} (tol 1e-12)")


def test_psi_composition_fixture():
    alpha = 0.5
    psi = build_psi(example1_phi(alpha), build_pair(build_f_nu(SignedMeasure.dirac(alpha))))
    y = np.linspace(-6, 6, 1000)
    err = rel_err(psi(y), np.where(y >= 0, np.exp(-y), np.exp(y)))
    report("psi composition fixture (Example 1, 1e3 points)", err <= 1e-12 and psi.continuous,
           f"max relative error {err:.2e} (tol 1e-12), psi continuous: {psi.continuous}")


def test_jump_identity_random_measures():
    seen, failed = [], []

    @settings(max_examples=100, derandomize=True, deadline=None,
              suppress_health_check=list(HealthCheck))
    @given(admissible_measures(max_atoms=5, max_pieces=4))
    def check(nu):
        seen.append(nu)
        if not jump_ratio_check(build_f_nu(nu), nu).ok:
            failed.append(nu)

    check()
    n_atoms = sum(len(nu.atoms) for nu in seen)
    report("jump identity on randomized admissible measures",
           not failed and len(seen) >= 100,
           f"{len(seen)} measures, {n_atoms} atoms checked, {len(failed)} failures")


def test_basschen_closed_form():
    pair = build_basschen_pair(SignedMeasure.dirac(0.25))
    x = np.linspace(0, 20, 1001)
    err = max_rel_or_abs(pair.map(x), 0.5 * x)
    xn = np.linspace(-20, 0, 1001)
    err = max(err, max_rel_or_abs(pair.map(xn), xn))
    worst = 0.0
    grid = np.linspace(-6, 6, 1201)
    for nu in (SignedMeasure.from_density([0, 1], [1.0]),
               SignedMeasure.from_density([-2, -0.5, 1, 3], [0.7, -1.2, 0.4]),
               SignedMeasure.from_density([-1, 4], [-0.3])):
        a, b = build_pair(build_f_nu(nu)), build_basschen_pair(nu)
        worst = max(worst, rel_err(b.density(grid), a.density(grid)))
    report("Bass-Chen closed form and atomless agreement", err <= 1e-12 and worst <= 1e-12,
           f"S(x)=0.5x error {err:.2e}, atomless density mismatch {worst:.2e} (tol 1e-12)")


def test_synthetic_rate_fit():
    worst = 0.0
    for n in ([4, 8, 16, 32], [4, 8, 16, 32, 64], [3, 10, 100, 1000]):
        for c, order in ((4.0, 1), (0.37, 1), (2.0, 2), (11.0, 2)):
            fit = fit_rate(synthetic_curve(n, [c / k**order for k in n]))
            worst = max(worst, abs(fit.gamma_hat - order) / (order * EPS))
            assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    report("synthetic rate-fit exactness", worst <= 16,
           f"max |gamma_hat - gamma| = {worst:.0f} ulp (tol 16 ulp)")


# ---------------------------------------------------------------------------
# Monte Carlo criteria (shared runs)


@pytest.fixture(scope="module")
def example1_run():
    model = builtin_model("example1", 0.5)
    g = example_payoff(0.5)
    rng = RngSpec(SEED).child("acceptance", "example1")
    n_list = [4, 8, 16, 32, 64]
    ref = reference_value(model, g, 1024, 1_000_000, rng, max_n=64)
    kept = {}

    def estimator(n):
        kept[n] = estimate_payoff(model, g, n, 200_000, rng, keep_samples=True)
        return kept[n]

    curve = weak_error_curve(model, g, n_list, 200_000, rng, ref, estimator=estimator)
    return model, ref, curve, kept


@pytest.fixture(scope="module")
def example2_run():
    model = builtin_model("example2", 0.5)
    g = example_payoff(0.5)
    rng = RngSpec(SEED).child("acceptance", "example2")
    ref = reference_value(model, g, 4096, 1_000_000, rng, max_n=512, keep_samples=True)
    kept = {}

    def estimator(n):
        kept[n] = estimate_payoff(model, g, n, 100_000, rng, keep_samples=True)
        return kept[n]

    curve = weak_error_curve(model, g, [8, 32, 128, 512], 100_000, rng, ref, estimator=estimator)
    return model, ref, curve, kept


@pytest.fixture(scope="module")
def equivalence_run():
    nu = SignedMeasure.from_density([0.0, 1.0], [1.0])
    phi = PiecewiseFunction.constant(1.0)
    legall = Model(phi, nu, pipeline="legall")
    drift = Model(phi, nu, pipeline="drift-ac")
    rng = RngSpec(SEED).child("acceptance", "equivalence")
    # independent streams so the two means are independent estimates
    xa = legall.simulate(256, 200_000, rng.child("legall"))
    xb = drift.simulate(256, 200_000, rng.child("drift-ac"))
    return legall, xa, xb


@pytest.mark.slow
def test_example1_weak_order(example1_run):
    _, ref, curve, _ = example1_run
    if not fittable(curve):
        report("Example 1 weak order", False, "fewer than 3 resolved points")
        return
    fit = fit_rate(curve)
    ok = 0.6 <= fit.gamma_hat <= 1.4 and fit.r2 >= 0.9
    errs = ", ".join(f"{p.n}:{p.error:.2e}{'*' if p.excluded else ''}" for p in curve)
    report("Example 1 weak order", ok,
           f"gamma_hat={fit.gamma_hat:.3f} +/- {fit.ci_half_width:.3f}, r2={fit.r2:.3f} "
           f"(need [0.6, 1.4], r2>=0.9); ref={ref.value:.6f}+/-{ref.se:.1e}; errors {errs}")


@pytest.mark.slow
def test_example2_ks(example2_run):
    _, ref, _, kept = example2_run
    a = kept[512].samples
    b = ref.samples[:100_000]
    ks = ks_distance(a, b)
    crit = ks_critical_value(a.size, b.size, 0.01)
    report("Example 2 KS distance n=512 vs n=4096", ks < crit,
           f"KS={ks:.5f}, 1% critical value {crit:.5f} (M=1e5 each)")


@pytest.mark.slow
def test_example2_error_sequence(example2_run):
    _, ref, curve, _ = example2_run
    bad = [(p.n, q.n) for p, q in zip(curve, curve[1:])
           if q.error > p.error + 2.0 * math.hypot(p.joint_se, q.joint_se)]
    errs = ", ".join(f"{p.n}:{p.error:.2e}+/-{p.joint_se:.1e}" for p in curve)
    report("Example 2 error sequence nonincreasing (2 joint SE)", not bad,
           f"errors {errs}; ref={ref.value:.6f}+/-{ref.se:.1e}; violations {bad}")


@pytest.mark.slow
def test_scheme_equivalence(equivalence_run):
    _, xa, xb = equivalence_run
    worst, parts = 0.0, []
    for name, g in (("x", BUILTIN_PAYOFFS["identity"]()), ("x^2", Quadratic())):
        ma, sa = sample_mean_se(g(xa))
        mb, sb = sample_mean_se(g(xb))
        z = abs(ma - mb) / math.hypot(sa, sb)
        worst = max(worst, z)
        parts.append(f"E[{name}] {ma:.5f} vs {mb:.5f} (z={z:.2f})")
    report("scheme equivalence legall vs drift-ac", worst <= 4.0,
           "; ".join(parts) + " (need z<=4)")


@pytest.mark.slow
def test_martingale_and_determinism(example1_run, example2_run, equivalence_run):
    checks = []
    models = [("example1 n=64", example1_run[0], example1_run[3][64].samples),
              ("example2 n=512", example2_run[0], example2_run[3][512].samples),
              ("equivalence n=256", equivalence_run[0], equivalence_run[1])]
    ok = True
    for name, model, x in models:
        y = model.pair.map(x)
        mean, se = sample_mean_se(y)
        z = abs(mean - model.y0) / se
        ok &= z <= 4.0
        checks.append(f"{name} z={z:.2f}")
    det = []
    for name in ("example1", "example2"):
        m = builtin_model(name, 0.5)
        rng = RngSpec(SEED).child("acceptance", "determinism")
        runs = [m.simulate(64, 50_000, rng, workers=w) for w in (1, 4, 16)]
        runs.append(m.simulate(64, 50_000, rng, workers=1))
        same = all(np.array_equal(runs[0], r) for r in runs[1:])
        ok &= same
        det.append(f"{name} bit-identical at 1/4/16 workers: {same}")
    report("martingale and determinism", ok, "; ".join(checks + det))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
