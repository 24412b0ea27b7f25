"""Models: an SDE with local time plus the pipeline used to simulate it.

Pipelines:

``legall``
    ``Y = F_nu(X)`` solves a driftless equation with coefficient
    ``(phi f_nu) o F^{-1}``; simulate ``Y`` and map back.
``basschen``
    Same idea with the Bass-Chen scale ``S`` and the left derivative ``S'_l``.
``drift-ac``
    Only for atomless ``nu(da) = g(a) da``: simulate
    ``dX = phi(X) dB + g(X) phi(X)^2 dt`` directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .funcdsl import (Constant, Exponential, PiecewiseFunction, Rational1, as_function)
from .measure import BASSCHEN, LEGALL, SignedMeasure, as_measure, validate
from .rng import RngSpec
from .sde import PathGrid, simulate_drift, simulate_driftless
from .transform import (CoefficientPsi, TransformPair, build_basschen_pair, build_f_nu,
                        build_pair, build_psi)

DRIFT_AC = "drift-ac"
PIPELINES = (LEGALL, BASSCHEN, DRIFT_AC)


class ModelError(ValueError):
    pass


def density_function(measure: SignedMeasure) -> PiecewiseFunction:
    """The continuous part of ``measure`` as a piecewise function."""
    dens = measure.continuous
    if not dens.breakpoints:
        return PiecewiseFunction.constant(0.0)
    forms = [Constant(0.0), *(Constant(v) for v in dens.values), Constant(0.0)]
    return PiecewiseFunction.from_forms(dens.breakpoints, forms)


def pipeline_problems(measure: SignedMeasure, pipeline: str) -> list:
    if pipeline not in PIPELINES:
        return [f"unknown pipeline {pipeline!r}; expected one of {', '.join(PIPELINES)}"]
    if pipeline == DRIFT_AC:
        if not measure.is_atomless:
            return ["pipeline drift-ac requires an atomless measure (nu(da) = g(a) da)"]
        return []
    report = validate(measure, pipeline)
    return [] if report else [report.message]


@dataclass(frozen=True)
class Model:
    phi: PiecewiseFunction
    measure: SignedMeasure = field(default_factory=SignedMeasure)
    x0: float = 0.0
    T: float = 1.0
    pipeline: str = LEGALL
    left_limit: bool = False

    def __post_init__(self):
        object.__setattr__(self, "phi", as_function(self.phi))
        object.__setattr__(self, "measure", as_measure(self.measure))
        object.__setattr__(self, "x0", float(self.x0))
        object.__setattr__(self, "T", float(self.T))
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ModelError("horizon T must be positive")
        problems = pipeline_problems(self.measure, self.pipeline)
        if problems:
            raise ModelError("; ".join(problems))

    def with_pipeline(self, pipeline: str) -> "Model":
        return Model(self.phi, self.measure, self.x0, self.T, pipeline, self.left_limit)

    @cached_property
    def pair(self) -> TransformPair:
        if self.pipeline == BASSCHEN:
            return build_basschen_pair(self.measure)
        if self.pipeline == LEGALL:
            return build_pair(build_f_nu(self.measure))
        return build_pair(PiecewiseFunction.constant(1.0))

    @cached_property
    def psi(self) -> CoefficientPsi:
        return build_psi(self.phi, self.pair, left_limit=self.left_limit)

    @cached_property
    def drift_density(self) -> PiecewiseFunction:
        return density_function(self.measure)

    @property
    def y0(self) -> float:
        return float(self.pair.map(self.x0))

    def drift(self, x):
        return self.drift_density(x) * self.phi(x) ** 2

    def simulate(self, n: int, M: int, rng: RngSpec, workers: int = 1,
                 space: str = "X") -> np.ndarray:
        """Terminal values of ``M`` Euler paths with ``n`` steps, in path order.

        ``space="Y"`` returns the transformed (driftless) variable instead.
        """
        grid = PathGrid(self.T, n)
        if self.pipeline == DRIFT_AC:
            return simulate_drift(self.phi, self.drift_density, self.x0, grid, M, rng, workers)
        y = simulate_driftless(self.psi, self.y0, grid, M, rng, workers)
        if space == "Y":
            return y
        return np.asarray(self.pair.inverse(y), dtype=float)

    def gaussian_law(self):
        """``(mean, std)`` of the terminal law when it is exactly Gaussian, else None.

        Holds for the zero measure with constant ``phi``; Euler is then exact.
        """
        if not self.measure.is_zero:
            return None
        values = {s.form.c for s in self.phi.segments if isinstance(s.form, Constant)}
        if len(values) != 1 or not all(isinstance(s.form, Constant) for s in self.phi.segments):
            return None
        c = values.pop()
        return self.x0, abs(c) * math.sqrt(self.T)

    def diagnostics(self) -> dict:
        diag = {"pipeline": self.pipeline,
                "phi_infimum": self.phi.infimum(),
                "phi_bounded_below": self.phi.infimum() > 0.0,
                "phi_total_variation": self.phi.total_variation()}
        if self.pipeline == DRIFT_AC:
            diag["psi"] = None
        else:
            diag["psi"] = self.psi.diagnostics()
        return diag

    def to_dict(self) -> dict:
        return {"x0": self.x0, "T": self.T, "phi": self.phi.render(),
                "measure": self.measure.to_dict(), "pipeline": self.pipeline,
                "left_limit": self.left_limit}


# ---------------------------------------------------------------------------
# built-in examples

BUILTINS = ("example1", "example2", "skewbm")


def example_payoff(alpha: float) -> PiecewiseFunction:
    """``1/(1+(r x)^2)`` on ``x >= 0`` and ``1/(1+x^2)`` below, ``r = (1-a)/(1+a)``."""
    r = (1.0 - alpha) / (1.0 + alpha)
    return PiecewiseFunction.from_forms([0.0], [Rational1(1.0, 1.0), Rational1(1.0, r)])


def example1_phi(alpha: float) -> PiecewiseFunction:
    r = (1.0 - alpha) / (1.0 + alpha)
    return PiecewiseFunction.from_forms(
        [0.0], [Exponential(1.0, 0.0, 1.0), Exponential((1.0 + alpha) / (1.0 - alpha), 0.0, -r)])


def builtin_model(name: str, alpha: float = 0.5, x0: float = 0.0, T: float = 1.0,
                  pipeline: str = LEGALL) -> Model:
    if name not in BUILTINS:
        raise ModelError(f"unknown example {name!r}; expected one of {', '.join(BUILTINS)}")
    measure = SignedMeasure.dirac(alpha, 0.0)
    phi = example1_phi(alpha) if name == "example1" else PiecewiseFunction.constant(1.0)
    return Model(phi, measure, x0, T, pipeline)
