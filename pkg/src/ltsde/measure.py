"""Finite signed measures on the real line.

A measure is a finite list of atoms plus a piecewise-constant density with
compact support.  Every integral the transforms need is then closed-form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

LEGALL = "legall"
BASSCHEN = "basschen"
REGIMES = (LEGALL, BASSCHEN)

ZERO_ATOM = 1e-15
SERIES_CUTOFF = 2.0**-10


class InadmissibleMeasureError(ValueError):
    """A measure violates the atom bound of the requested regime."""


class PiDomainError(ValueError):
    pass


@dataclass(frozen=True)
class Atom:
    location: float
    weight: float


@dataclass(frozen=True)
class PiecewiseConstantDensity:
    """Density equal to ``values[i]`` on ``[breakpoints[i], breakpoints[i+1])``.

    Zero outside the outermost breakpoints.
    """

    breakpoints: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if len(bp) == 0 and len(vals) == 0:
            object.__setattr__(self, "breakpoints", ())
            object.__setattr__(self, "values", ())
            return
        if len(vals) != len(bp) - 1:
            raise ValueError(
                f"density needs len(values) == len(breakpoints) - 1, got "
                f"{len(vals)} values for {len(bp)} breakpoints")
        if not all(math.isfinite(b) for b in bp) or not all(math.isfinite(v) for v in vals):
            raise ValueError("density breakpoints and values must be finite")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ValueError("density breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)

    def value(self, x):
        """Density value at ``x`` (right-continuous)."""
        x = np.asarray(x, dtype=float)
        if not self.breakpoints:
            return np.zeros_like(x)[()]
        bp = np.asarray(self.breakpoints)
        padded = np.concatenate(([0.0], self.values, [0.0]))
        return padded[np.searchsorted(bp, x, side="right")][()]

    def cumulative(self, x):
        """Exact integral of the density over ``(-inf, x]``."""
        x = np.asarray(x, dtype=float)
        if not self.breakpoints:
            return np.zeros_like(x)[()]
        bp = np.asarray(self.breakpoints)
        vals = np.asarray(self.values)
        masses = vals * np.diff(bp)
        cum_at_bp = np.concatenate(([0.0], np.cumsum(masses)))
        # index of the last breakpoint <= x, clipped into the support
        j = np.clip(np.searchsorted(bp, x, side="right") - 1, 0, len(bp) - 1)
        slope = np.concatenate((vals, [0.0]))[j]
        out = cum_at_bp[j] + slope * (np.minimum(x, bp[-1]) - bp[j])
        return np.where(x < bp[0], 0.0, out)[()]

    def total_variation(self) -> float:
        if not self.breakpoints:
            return 0.0
        return float(np.sum(np.abs(self.values) * np.diff(self.breakpoints)))

    def to_dict(self) -> dict:
        return {"breakpoints": list(self.breakpoints), "values": list(self.values)}


@dataclass(frozen=True)
class SignedMeasure:
    atoms: tuple = ()
    continuous: PiecewiseConstantDensity = field(default_factory=PiecewiseConstantDensity)

    def __post_init__(self):
        merged: dict[float, float] = {}
        for a in self.atoms:
            if not isinstance(a, Atom):
                a = Atom(*a) if not isinstance(a, dict) else Atom(**a)
            loc, w = float(a.location), float(a.weight)
            if not (math.isfinite(loc) and math.isfinite(w)):
                raise ValueError(f"atom {a} is not finite")
            merged[loc] = merged.get(loc, 0.0) + w
        atoms = tuple(Atom(loc, w) for loc, w in sorted(merged.items()) if abs(w) >= ZERO_ATOM)
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def dirac(cls, weight: float, location: float = 0.0) -> "SignedMeasure":
        return cls(atoms=(Atom(location, weight),))

    @classmethod
    def from_density(cls, breakpoints, values) -> "SignedMeasure":
        return cls(continuous=PiecewiseConstantDensity(tuple(breakpoints), tuple(values)))

    @property
    def locations(self) -> np.ndarray:
        return np.array([a.location for a in self.atoms], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([a.weight for a in self.atoms], dtype=float)

    @property
    def is_atomless(self) -> bool:
        return not self.atoms

    @property
    def is_zero(self) -> bool:
        return not self.atoms and self.continuous.is_zero

    def breakpoints(self) -> np.ndarray:
        """Sorted union of atom locations and density breakpoints."""
        pts = set(self.continuous.breakpoints) | {a.location for a in self.atoms}
        return np.array(sorted(pts), dtype=float)

    def total_variation(self) -> float:
        return float(np.sum(np.abs(self.weights))) + self.continuous.total_variation()

    def to_dict(self) -> dict:
        out = {"atoms": [{"location": a.location, "weight": a.weight} for a in self.atoms]}
        if self.continuous.breakpoints:
            out["density"] = self.continuous.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "SignedMeasure":
        data = data or {}
        atoms = [Atom(float(a["location"]), float(a["weight"])) for a in data.get("atoms") or []]
        dens = data.get("density")
        continuous = PiecewiseConstantDensity()
        if dens:
            continuous = PiecewiseConstantDensity(tuple(dens["breakpoints"]), tuple(dens["values"]))
        return cls(atoms=tuple(atoms), continuous=continuous)


@dataclass(frozen=True)
class AdmissibilityReport:
    ok: bool
    regime: str
    atom: Optional[Atom] = None
    bound: str = ""

    def __bool__(self):
        return self.ok

    @property
    def message(self) -> str:
        if self.ok:
            return f"measure is {self.regime}-admissible"
        return (f"atom at {self.atom.location:g} with weight {self.atom.weight:g} "
                f"violates the {self.regime} bound {self.bound}")


def validate(measure: SignedMeasure, regime: str = LEGALL) -> AdmissibilityReport:
    """Check the atom bound of ``regime``; report the first violating atom."""
    if regime == LEGALL:
        bad = lambda w: not abs(w) < 1.0
        bound = "|weight| < 1"
    elif regime == BASSCHEN:
        bad = lambda w: not w < 0.5
        bound = "weight < 1/2"
    else:
        raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    for a in measure.atoms:
        if bad(a.weight):
            return AdmissibilityReport(False, regime, a, bound)
    return AdmissibilityReport(True, regime)


def require(measure: SignedMeasure, regime: str) -> None:
    report = validate(measure, regime)
    if not report:
        raise InadmissibleMeasureError(report.message)


def cumulative_continuous(measure: SignedMeasure, x):
    """Mass of the continuous part on ``(-inf, x]``."""
    return measure.continuous.cumulative(x)


def atom_product(measure: SignedMeasure, x):
    """Product of ``(1 - w) / (1 + w)`` over the atoms located at or left of ``x``."""
    require(measure, LEGALL)
    w = measure.weights
    factors = np.concatenate(([1.0], np.cumprod((1.0 - w) / (1.0 + w))))
    idx = np.searchsorted(measure.locations, np.asarray(x, dtype=float), side="right")
    return factors[idx][()]


def _pi_series(x: float) -> float:
    # sum_{k>=0} (2x)^k / (k+1), summed until the terms stop contributing
    u = 2.0 * x
    total, term, k = 0.0, 1.0, 0
    while True:
        inc = term / (k + 1)
        if total + inc == total:
            return total
        total += inc
        term *= u
        k += 1


def _pi_direct(x: float) -> float:
    return -math.log1p(-2.0 * x) / (2.0 * x)


def pi_coeff(x: float) -> float:
    """``-log(1 - 2x) / (2x)``, continuously extended by 1 at ``x = 0``."""
    x = float(x)
    if not x < 0.5:
        raise PiDomainError(f"pi_coeff is defined for x < 1/2, got {x}")
    if abs(x) < SERIES_CUTOFF:
        return _pi_series(x)
    return _pi_direct(x)


def basschen_measure(measure: SignedMeasure) -> SignedMeasure:
    """Reweight atoms by ``pi_coeff``; the diffuse part is unchanged since pi(0) = 1."""
    atoms = tuple(Atom(a.location, pi_coeff(a.weight) * a.weight) for a in measure.atoms)
    return SignedMeasure(atoms=atoms, continuous=measure.continuous)


def as_measure(obj) -> SignedMeasure:
    if isinstance(obj, SignedMeasure):
        return obj
    if obj is None:
        return SignedMeasure()
    if isinstance(obj, dict):
        return SignedMeasure.from_dict(obj)
    if isinstance(obj, Iterable):
        return SignedMeasure(atoms=tuple(obj))
    raise TypeError(f"cannot interpret {obj!r} as a SignedMeasure")
