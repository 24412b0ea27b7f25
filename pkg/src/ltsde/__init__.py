"""Weak Euler approximation of SDEs with a local-time drift.

``X_t = x0 + int phi(X) dB + int nu(da) L^a_t(X)`` is mapped to a driftless
equation by a space transform, simulated with Euler-Maruyama, and mapped back.
"""

from .funcdsl import PiecewiseFunction, parse, render
from .measure import Atom, SignedMeasure, validate
from .models import Model, builtin_model, example_payoff
from .montecarlo import (estimate_payoff, fit_rate, ks_distance, reference_value,
                         weak_error_curve)
from .rng import RngSpec
from .transform import build_basschen_pair, build_f_nu, build_pair, build_psi

__version__ = "0.1.0"

__all__ = [
    "Atom", "Model", "PiecewiseFunction", "RngSpec", "SignedMeasure", "build_basschen_pair",
    "build_f_nu", "build_pair", "build_psi", "builtin_model", "estimate_payoff", "fit_rate",
    "ks_distance", "example_payoff", "parse", "reference_value", "render", "validate",
    "weak_error_curve",
]
