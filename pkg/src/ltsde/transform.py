"""Scale transforms that remove the local-time term.

``build_f_nu`` gives Le Gall's density ``f_nu``, ``build_basschen_pair`` the
Bass-Chen scale ``S``; both are wrapped in a :class:`TransformPair` holding
the strictly increasing map, its closed-form inverse and its density.
:class:`CoefficientPsi` composes the pair with ``phi`` into the diffusion
coefficient of the driftless equation for ``Y = map(X)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .funcdsl import (INF, JUMP_RTOL, Constant, Exponential, Linear, PiecewiseFunction,
                      _eval_params, _json_num)
from .measure import (BASSCHEN, LEGALL, SignedMeasure, atom_product, basschen_measure,
                      cumulative_continuous, require)

JUMP_CHECK_RTOL = 1e-12


class TransformError(ValueError):
    pass


def _exprel(z):
    # expm1(z)/z, equal to 1 at z = 0; stays accurate for subnormal z
    z = np.asarray(z, dtype=float)
    zero = z == 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        return np.where(zero, 1.0, np.expm1(z) / np.where(zero, 1.0, z))


def _logrel(w):
    # log1p(w)/w, equal to 1 at w = 0
    w = np.asarray(w, dtype=float)
    zero = w == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(zero, 1.0, np.log1p(w) / np.where(zero, 1.0, w))


def _scale_density(measure: SignedMeasure, atom_factor) -> PiecewiseFunction:
    """``exp(-2 * nu_c(-inf, x]) * prod_{atoms <= x} factor`` as exact segments."""
    bps = measure.breakpoints()
    if len(bps) == 0:
        return PiecewiseFunction.constant(1.0)
    forms = [Constant(1.0)]
    for b in bps:
        k = math.exp(-2.0 * float(cumulative_continuous(measure, b))) * float(atom_factor(b))
        v = float(measure.continuous.value(b))
        forms.append(Constant(k) if v == 0.0 else Exponential(k, 2.0 * v * b, -2.0 * v))
    return PiecewiseFunction.from_forms(bps, forms)


def build_f_nu(measure: SignedMeasure) -> PiecewiseFunction:
    """Le Gall density, normalized to 1 left of every atom and density breakpoint."""
    require(measure, LEGALL)
    return _scale_density(measure, lambda x: atom_product(measure, x))


class TransformPair:
    """Strictly increasing map ``F(x) = int_0^x density`` with its exact inverse.

    The density must be strictly positive and made of constant or exponential
    segments; unbounded segments must be constant so that ``F`` maps onto the
    whole line.
    """

    def __init__(self, density: PiecewiseFunction, kind: str = "custom"):
        self.density = density
        self.kind = kind
        segs = density.segments
        n = len(segs)
        lower = np.array([s.lower for s in segs])
        upper = np.array([s.upper for s in segs])
        anchor = np.where(lower > 0, lower, np.where(upper <= 0, upper, 0.0))
        scale = np.empty(n)
        rate = np.empty(n)
        for j, s in enumerate(segs):
            form = s.form
            if isinstance(form, Constant) or (isinstance(form, Linear) and form.b == 0.0):
                rate[j] = 0.0
            elif isinstance(form, Exponential):
                rate[j] = form.b
            else:
                raise TransformError(f"density segment {form} is not constant or exponential")
            if rate[j] != 0.0 and (math.isinf(s.lower) or math.isinf(s.upper)):
                raise TransformError("exponential density segments must be bounded")
            scale[j] = float(_eval_params(np.array(form.params()), anchor[j]))
            if not scale[j] > 0.0:
                raise TransformError(f"density must be strictly positive, got {form} "
                                     f"on [{s.lower}, {s.upper})")
            if form.infimum(s.lower, s.upper) <= 0.0:
                raise TransformError(f"density not bounded away from 0 on [{s.lower}, {s.upper})")
        self._lower, self._upper = lower, upper
        self._anchor, self._scale, self._rate = anchor, scale, rate
        self._breaks = lower[1:].copy()
        # map value at each anchor, accumulated outward from the segment holding 0
        j0 = int(np.searchsorted(self._breaks, 0.0, side="right"))
        f_at = np.zeros(n)
        for j in range(j0 + 1, n):
            f_at[j] = f_at[j - 1] + self._increment(j - 1, lower[j])
        for j in range(j0 - 1, -1, -1):
            f_at[j] = f_at[j + 1] + self._increment(j + 1, upper[j])
        self._f_at = f_at
        self._map_breaks = np.array([f_at[j] + self._increment(j, lower[j]) for j in range(1, n)])

    def _increment(self, j, x):
        d = x - self._anchor[j]
        r = self._rate[j]
        z = r * d
        return self._scale[j] * d * (math.expm1(z) / z if z != 0.0 else 1.0)

    @property
    def breakpoints(self) -> np.ndarray:
        return self._breaks.copy()

    def map(self, x):
        x = np.asarray(x, dtype=float)
        j = np.searchsorted(self._breaks, x, side="right")
        d = x - self._anchor[j]
        r, k = self._rate[j], self._scale[j]
        inc = k * d * _exprel(r * d)
        return (self._f_at[j] + inc)[()]

    __call__ = map

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        j = np.searchsorted(self._map_breaks, y, side="right")
        d = y - self._f_at[j]
        r, k = self._rate[j], self._scale[j]
        step = d / k * _logrel(r * d / k)
        return (self._anchor[j] + step)[()]

    def density_left(self, x):
        """Left-continuous version of the density (the left derivative of the map)."""
        return self.density.eval_left(x)

    def to_dict(self) -> dict:
        segs = []
        for j, s in enumerate(self.density.segments):
            segs.append({
                "lower": _json_num(s.lower), "upper": _json_num(s.upper),
                "map_form": "linear" if self._rate[j] == 0.0 else "exponential",
                "anchor": float(self._anchor[j]), "map_at_anchor": float(self._f_at[j]),
                "density_at_anchor": float(self._scale[j]), "rate": float(self._rate[j]),
            })
        return {"kind": self.kind, "density": self.density.to_dict(), "map": {"segments": segs}}


def build_pair(density: PiecewiseFunction) -> TransformPair:
    return TransformPair(density, kind="legall")


def build_basschen_pair(measure: SignedMeasure) -> TransformPair:
    """``S(x) = int_0^x exp(-2 mu(-inf, y]) dy`` with ``mu = pi(nu({x})) nu(dx)``."""
    require(measure, BASSCHEN)
    mu = basschen_measure(measure)
    locs, w = mu.locations, mu.weights
    factors = np.concatenate(([1.0], np.cumprod(np.exp(-2.0 * w))))

    def atom_factor(x):
        return factors[np.searchsorted(locs, x, side="right")]

    return TransformPair(_scale_density(mu, atom_factor), kind="basschen")


@dataclass(frozen=True)
class PsiDiscontinuity:
    y: float
    x: float
    left: float
    right: float

    @property
    def liminf_sq(self) -> float:
        return min(self.left**2, self.right**2)


@dataclass
class CoefficientPsi:
    """``psi(y) = phi(x) * density(x)`` at ``x = pair.inverse(y)``.

    ``left_density`` selects the left-continuous density (Bass-Chen);
    ``left_limit`` evaluates both factors by their left limits.
    """

    phi: PiecewiseFunction
    pair: TransformPair
    left_density: bool = False
    left_limit: bool = False
    _disc: list = field(default=None, init=False, repr=False)

    def at_x(self, x):
        """The coefficient expressed in the original variable."""
        if self.left_limit:
            return self.phi.eval_left(x) * self.pair.density.eval_left(x)
        dens = self.pair.density.eval_left(x) if self.left_density else self.pair.density(x)
        return self.phi(x) * dens

    def __call__(self, y):
        return self.at_x(self.pair.inverse(y))

    def discontinuities(self) -> list:
        if self._disc is None:
            pts = sorted(set(self.phi.breakpoints) | set(self.pair.density.breakpoints))
            out = []
            for b in pts:
                left = float(self.phi.eval_left(b) * self.pair.density.eval_left(b))
                right = float(self.phi(b) * self.pair.density(b))
                if not math.isclose(left, right, rel_tol=JUMP_RTOL, abs_tol=0.0):
                    out.append(PsiDiscontinuity(float(self.pair.map(b)), float(b), left, right))
            self._disc = out
        return list(self._disc)

    @property
    def continuous(self) -> bool:
        return not self.discontinuities()

    def bounds(self) -> tuple:
        """Exact (inf, sup) of phi times the (inf, sup) of the density, as a coarse box."""
        ph = (self.phi.infimum(), self.phi.supremum())
        de = (self.pair.density.infimum(), self.pair.density.supremum())
        prods = [a * b for a in ph for b in de if not (math.isinf(a) and b == 0.0)]
        return min(prods), max(prods)

    def diagnostics(self) -> dict:
        """Checks for the weak-convergence theorems on the transformed equation."""
        disc = self.discontinuities()
        lo, hi = self.bounds()
        return {
            "psi_continuous": not disc,
            "discontinuities": [{"y": d.y, "x": d.x, "left": d.left, "right": d.right,
                                 "liminf_psi_sq": d.liminf_sq} for d in disc],
            "lebesgue_null_discontinuity_set": True,
            "liminf_positive": all(d.liminf_sq > 0.0 for d in disc),
            # density tails are constant, so growth is decided by phi alone
            "at_most_linear_growth": self.phi.at_most_linear_growth(),
            "bounded": math.isfinite(lo) and math.isfinite(hi),
            "y0_fourth_moment_finite": True,
        }


def build_psi(phi: PiecewiseFunction, pair: TransformPair, left_limit: bool = False) -> CoefficientPsi:
    return CoefficientPsi(phi, pair, left_density=pair.kind == BASSCHEN, left_limit=left_limit)


@dataclass(frozen=True)
class AtomCheck:
    location: float
    jump: float
    expected: float
    ok: bool


@dataclass(frozen=True)
class IntervalCheck:
    point: float
    log_derivative: float
    expected: float
    ok: bool


@dataclass(frozen=True)
class JumpRatioReport:
    atoms: tuple
    intervals: tuple

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.atoms) and all(c.ok for c in self.intervals)

    def __bool__(self):
        return self.ok


def jump_ratio_check(f: PiecewiseFunction, measure: SignedMeasure,
                     rtol: float = JUMP_CHECK_RTOL) -> JumpRatioReport:
    """Verify ``f'(dx) + (f(x) + f(x-)) nu(dx) = 0`` atom by atom and between atoms.

    Atom residuals are measured relative to ``|f(a)| + |f(a-)|``.
    """
    atoms = []
    for a in measure.atoms:
        right, left = float(f(a.location)), float(f.eval_left(a.location))
        jump, expected = right - left, -(right + left) * a.weight
        ok = abs(jump - expected) <= rtol * (abs(right) + abs(left))
        atoms.append(AtomCheck(a.location, jump, expected, ok))
    edges = np.concatenate(([-INF], np.union1d(measure.breakpoints(), f.breakpoints), [INF]))
    intervals = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if math.isinf(lo) and math.isinf(hi):
            m = 0.0
        elif math.isinf(lo):
            m = hi - 1.0
        elif math.isinf(hi):
            m = lo + 1.0
        else:
            m = 0.5 * (lo + hi)
        logd = float(f.derivative(m) / f(m))
        expected = -2.0 * float(measure.continuous.value(m))
        intervals.append(IntervalCheck(m, logd, expected,
                                       abs(logd - expected) <= rtol * (1.0 + abs(expected))))
    return JumpRatioReport(tuple(atoms), tuple(intervals))
