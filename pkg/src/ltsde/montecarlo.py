"""Monte Carlo weak-error estimation and convergence-order fitting."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special, stats

from .funcdsl import Constant, Exponential, Linear, PiecewiseFunction, Rational1
from .rng import RngSpec

FINE_GRID = "fine-grid"
CLOSED_FORM = "closed-form"
EXCLUDE_SE = 2.0


class InsufficientPointsError(ValueError):
    pass


class Quadratic:
    """The payoff ``x**2``."""

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (x * x)[()]

    def render(self) -> str:
        return "quadratic"

    def __repr__(self):
        return "Quadratic()"


BUILTIN_PAYOFFS = {"quadratic": Quadratic, "identity": lambda: PiecewiseFunction.from_forms(
    [], [Linear(0.0, 1.0)])}


# ---------------------------------------------------------------------------
# statistics


def sample_mean_se(values) -> tuple:
    """Mean and standard error with exactly rounded (order-independent) sums."""
    v = np.asarray(values, dtype=float).ravel()
    m = v.size
    if m < 2:
        raise ValueError("need at least two samples")
    mean = math.fsum(v) / m
    var = math.fsum((v - mean) ** 2) / (m - 1)
    return mean, math.sqrt(var / m)


def _segment_gaussian(form, lo, hi, mean, std) -> float:
    a = (lo - mean) / std
    b = (hi - mean) / std
    mass = special.ndtr(b) - special.ndtr(a)
    if isinstance(form, Constant):
        return form.c * mass
    if isinstance(form, Linear):
        dens = (math.exp(-0.5 * a * a) if math.isfinite(a) else 0.0) - \
               (math.exp(-0.5 * b * b) if math.isfinite(b) else 0.0)
        first = mean * mass + std * dens / math.sqrt(2.0 * math.pi)
        return form.a * mass + form.b * first
    if isinstance(form, Exponential):
        k = form.b * std
        shifted = special.ndtr(b - k) - special.ndtr(a - k)
        return form.c * math.exp(form.a + form.b * mean + 0.5 * k * k) * shifted
    if isinstance(form, Rational1):
        f = lambda z: form.c / (1.0 + (form.s * (mean + std * z)) ** 2) * \
            math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        val, _ = integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)
        return val
    raise TypeError(f"no Gaussian expectation for {form!r}")


def gaussian_expectation(payoff, mean: float, std: float) -> float:
    """``E[payoff(Z)]`` for ``Z ~ N(mean, std^2)``; rational pieces use adaptive quadrature."""
    if std == 0.0:
        return float(payoff(mean))
    if isinstance(payoff, Quadratic):
        return mean * mean + std * std
    if isinstance(payoff, PiecewiseFunction):
        return math.fsum(_segment_gaussian(s.form, s.lower, s.upper, mean, std)
                         for s in payoff.segments)
    raise TypeError(f"no closed form for payoff {payoff!r}")


# ---------------------------------------------------------------------------
# estimates


@dataclass(frozen=True)
class WeakErrorEstimate:
    n: int
    mean: float
    se: float
    M: int
    samples: Optional[np.ndarray] = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class ReferenceValue:
    value: float
    method: str
    se: float = 0.0
    n_ref: Optional[int] = None
    M_ref: Optional[int] = None
    samples: Optional[np.ndarray] = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class CurvePoint:
    n: int
    dt: float
    estimate: float
    se: float
    error: float
    joint_se: float
    excluded: bool


@dataclass(frozen=True)
class RateFit:
    gamma_hat: float
    logC_hat: float
    r2: float
    ci_half_width: float
    n_points: int
    excluded: tuple = ()


def estimate_payoff(model, payoff, n: int, M: int, rng: RngSpec, workers: int = 1,
                    keep_samples: bool = False) -> WeakErrorEstimate:
    """Monte Carlo estimate of ``E[payoff(X^n_T)]``."""
    if M < 2:
        raise ValueError("M must be at least 2")
    x = model.simulate(n, M, rng.child("estimate", n), workers)
    mean, se = sample_mean_se(payoff(x))
    return WeakErrorEstimate(n, mean, se, M, x if keep_samples else None)


def reference_value(model, payoff, n_ref: int, M_ref: int, rng: RngSpec,
                    max_n: Optional[int] = None, workers: int = 1,
                    keep_samples: bool = False) -> ReferenceValue:
    """Proxy for ``E[payoff(X_T)]``: closed form when the law is Gaussian, else a fine grid."""
    law = model.gaussian_law()
    if law is not None:
        try:
            return ReferenceValue(gaussian_expectation(payoff, *law), CLOSED_FORM)
        except TypeError:
            pass
    if max_n is not None and n_ref < 8 * max_n:
        raise ValueError(f"n_ref={n_ref} must be at least 8 x the largest n ({max_n})")
    est = estimate_payoff(model, payoff, n_ref, M_ref, rng.child("reference"), workers,
                          keep_samples=keep_samples)
    return ReferenceValue(est.mean, FINE_GRID, est.se, n_ref, M_ref, est.samples)


def weak_error_curve(model, payoff, n_list: Sequence[int], M: int, rng: RngSpec,
                     ref: ReferenceValue, workers: int = 1,
                     estimator: Optional[Callable] = None) -> list:
    """``|estimate(n) - ref|`` with joint standard error for each ``n``.

    Points within ``EXCLUDE_SE`` joint standard errors of zero are flagged
    ``excluded`` and left out of :func:`fit_rate`.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing with at least 3 entries")
    estimator = estimator or (lambda n: estimate_payoff(model, payoff, n, M, rng, workers))
    T = model.T if model is not None else 1.0
    curve = []
    for n in n_list:
        est = estimator(n)
        err = abs(est.mean - ref.value)
        joint = math.hypot(est.se, ref.se)
        curve.append(CurvePoint(n, T / n, est.mean, est.se, err, joint,
                                bool(err <= EXCLUDE_SE * joint)))
    usable = [p.error for p in curve if not p.excluded]
    if ref.method == FINE_GRID and usable and ref.se > min(usable) / 3.0:
        warnings.warn(f"reference standard error {ref.se:.3g} exceeds a third of the "
                      f"smallest resolved error {min(usable):.3g}", RuntimeWarning)
    return curve


def fittable(curve) -> bool:
    return sum(not p.excluded for p in curve) >= 3


def fit_rate(curve) -> RateFit:
    """Least squares of ``log|error|`` on ``log dt``; the slope is the weak order."""
    pts = [p for p in curve if not p.excluded]
    if len(pts) < 3:
        raise InsufficientPointsError(f"need at least 3 usable points, got {len(pts)}")
    x = np.log([p.dt for p in pts])
    y = np.log([p.error for p in pts])
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = len(pts) - 2
    half = float(stats.t.ppf(0.975, dof) * math.sqrt(ss_res / dof / sxx))
    excluded = tuple(p.n for p in curve if p.excluded)
    return RateFit(slope, intercept, r2, half, len(pts), excluded)


def synthetic_curve(n_list, errors, T: float = 1.0) -> list:
    """Noise-free curve from given errors (for checking the fit itself)."""
    return [CurvePoint(int(n), T / n, float(e), 0.0, float(e), 0.0, False)
            for n, e in zip(n_list, errors)]


# ---------------------------------------------------------------------------
# distributions


def ks_distance(samples_a, samples_b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F_a - F_b|``."""
    a = np.sort(np.asarray(samples_a, dtype=float).ravel())
    b = np.sort(np.asarray(samples_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("both sample sets must be nonempty")
    grid = np.concatenate((a, b))
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_critical_value(n_a: int, n_b: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sample critical value ``c(alpha) sqrt((n_a + n_b) / (n_a n_b))``."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n_a + n_b) / (n_a * n_b))


def compare_samples(samples_a, samples_b, payoff) -> dict:
    ma, sa = sample_mean_se(payoff(samples_a))
    mb, sb = sample_mean_se(payoff(samples_b))
    joint = math.hypot(sa, sb)
    ks = ks_distance(samples_a, samples_b)
    return {"ks": ks, "ks_critical_1pct": ks_critical_value(len(samples_a), len(samples_b)),
            "mean_a": ma, "se_a": sa, "mean_b": mb, "se_b": sb,
            "difference": ma - mb, "joint_se": joint,
            "z": (ma - mb) / joint if joint > 0 else (0.0 if ma == mb else math.inf)}
