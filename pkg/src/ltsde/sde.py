"""Euler-Maruyama schemes on a uniform grid.

Two layers share one set of increments:

* the reference schemes (:func:`euler_diffusion_path`,
  :func:`euler_drift_diffusion_path`) take explicit increments and any
  vectorized coefficient callables;
* the batch engine (:func:`simulate_driftless`, :func:`simulate_drift`)
  runs fused numba kernels that draw the same counter-based normals inline,
  one path at a time, so results never depend on how paths are split
  across threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba as nb
import numpy as np

from .rng import LANES, RngSpec, normal_block, standard_normals

CHUNK_PATHS = 4096


class NonFiniteError(FloatingPointError):
    """A path produced NaN or infinity."""

    def __init__(self, paths, message: str = ""):
        self.paths = list(paths)
        shown = ", ".join(map(str, self.paths[:10]))
        more = f" (+{len(self.paths) - 10} more)" if len(self.paths) > 10 else ""
        super().__init__(message or f"non-finite value on path(s) {shown}{more}")


@dataclass(frozen=True)
class PathGrid:
    T: float
    n: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("horizon T must be positive and finite")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("step count n must be a positive integer")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dt(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        return self.T * np.arange(self.n + 1) / self.n


def brownian_increments(grid: PathGrid, rng: RngSpec, path: int) -> np.ndarray:
    return standard_normals(rng, path, 1, grid.n)[:, 0] * math.sqrt(grid.dt)


def increment_block(grid: PathGrid, rng: RngSpec, path_start: int, n_paths: int) -> np.ndarray:
    """Increments for consecutive paths, shape ``(n, n_paths)``."""
    return standard_normals(rng, path_start, n_paths, grid.n) * math.sqrt(grid.dt)


def _check_finite(values, path_start=0):
    bad = np.flatnonzero(~np.isfinite(np.atleast_1d(values)))
    if bad.size:
        raise NonFiniteError(bad + path_start)


def euler_diffusion_path(psi, y0, grid: PathGrid, dB, full_path: bool = False):
    """``Y_{k+1} = Y_k + psi(Y_k) dB_k``; ``dB`` is ``(n,)`` or ``(n, paths)``."""
    dB = np.asarray(dB, dtype=float)
    if dB.shape[0] != grid.n:
        raise ValueError(f"expected {grid.n} increments, got {dB.shape[0]}")
    y = np.broadcast_to(np.asarray(y0, dtype=float), dB.shape[1:]).copy()
    path = [y.copy()] if full_path else None
    for k in range(grid.n):
        y = y + psi(y) * dB[k]
        if full_path:
            path.append(y.copy())
    _check_finite(y)
    return np.array(path) if full_path else y[()]


def euler_drift_diffusion_path(sigma, b, x0, grid: PathGrid, dB, full_path: bool = False):
    """``X_{k+1} = X_k + sigma(X_k) dB_k + b(X_k) dt``."""
    dB = np.asarray(dB, dtype=float)
    if dB.shape[0] != grid.n:
        raise ValueError(f"expected {grid.n} increments, got {dB.shape[0]}")
    dt = grid.dt
    x = np.broadcast_to(np.asarray(x0, dtype=float), dB.shape[1:]).copy()
    path = [x.copy()] if full_path else None
    for k in range(grid.n):
        x = x + sigma(x) * dB[k] + b(x) * dt
        if full_path:
            path.append(x.copy())
    _check_finite(x)
    return np.array(path) if full_path else x[()]


def simulate_X_terminal(pair, psi, x0: float, grid: PathGrid, rng: RngSpec, path: int) -> float:
    """One path through the transform: ``F^{-1}(Y^n_T)`` with ``Y^n_0 = F(x0)``."""
    dB = brownian_increments(grid, rng, path)
    y = euler_diffusion_path(psi, pair.map(x0), grid, dB)
    return float(pair.inverse(y))


# ---------------------------------------------------------------------------
# fused kernels


@nb.njit(inline="always")
def _pw(breaks, params, x, left):
    j = 0
    nb_ = breaks.shape[0]
    if left:
        while j < nb_ and breaks[j] < x:
            j += 1
    else:
        while j < nb_ and breaks[j] <= x:
            j += 1
    # index the table directly: row views are refcounted and slow
    v = params[j, 0] + params[j, 1] * x
    c = params[j, 2]
    if c != 0.0:
        # same operation order as the vectorized evaluator
        s = params[j, 5] * x
        v = v + c * np.exp(params[j, 3] + params[j, 4] * x) / (1.0 + s * s)
    return v


@nb.njit(inline="always")
def _inverse(breaks, anchor, scale, rate, f_at, y):
    j = 0
    while j < breaks.shape[0] and breaks[j] <= y:
        j += 1
    d = y - f_at[j]
    if rate[j] == 0.0:
        return anchor[j] + d / scale[j]
    return anchor[j] + np.log1p(rate[j] * d / scale[j]) / rate[j]


@nb.njit(nogil=True, cache=True)
def _driftless_kernel(k0, k1, path0, m, n, sqdt, y0,
                      ib, ia, isc, ir, ifa,
                      pb, pp, db, dp, phi_left, den_left, out):
    nblocks = (n + LANES - 1) // LANES
    for j in range(m):
        y = y0
        for blk in range(nblocks):
            z = normal_block(k0, k1, blk, path0 + j)
            for lane in range(LANES):
                if LANES * blk + lane < n:
                    x = _inverse(ib, ia, isc, ir, ifa, y)
                    c = _pw(pb, pp, x, phi_left) * _pw(db, dp, x, den_left)
                    y = y + c * (z[lane] * sqdt)
        out[j] = y


@nb.njit(nogil=True, cache=True)
def _drift_kernel(k0, k1, path0, m, n, sqdt, dt, x0, sb, sp, gb, gp, out):
    # drift of the absolutely continuous case: b = g * sigma^2
    nblocks = (n + LANES - 1) // LANES
    for j in range(m):
        x = x0
        for blk in range(nblocks):
            z = normal_block(k0, k1, blk, path0 + j)
            for lane in range(LANES):
                if LANES * blk + lane < n:
                    s = _pw(sb, sp, x, False)
                    g = _pw(gb, gp, x, False)
                    x = x + s * (z[lane] * sqdt) + (g * s * s) * dt
        out[j] = x


def _run_chunks(run_chunk, M: int, workers: int, path_start: int = 0) -> np.ndarray:
    starts = list(range(0, M, CHUNK_PATHS))
    sizes = [min(CHUNK_PATHS, M - s) for s in starts]
    if workers <= 1:
        parts = [run_chunk(s, m) for s, m in zip(starts, sizes)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_chunk, starts, sizes))
    out = np.concatenate(parts) if parts else np.empty(0)
    _check_finite(out, path_start)
    return out


def _table(f):
    return np.ascontiguousarray(f._breaks), np.ascontiguousarray(f._params)


def simulate_driftless(psi, y0: float, grid: PathGrid, M: int, rng: RngSpec,
                       workers: int = 1, path_start: int = 0) -> np.ndarray:
    """Terminal ``Y^n_T`` of ``M`` paths of the driftless scheme (path order)."""
    pair = psi.pair
    inv = (np.ascontiguousarray(pair._map_breaks), pair._anchor, pair._scale,
           pair._rate, pair._f_at)
    pb, pp = _table(psi.phi)
    db, dp = _table(pair.density)
    phi_left = bool(psi.left_limit)
    den_left = bool(psi.left_limit or psi.left_density)
    k0, k1 = rng.key
    sqdt = math.sqrt(grid.dt)

    def run_chunk(start, m):
        out = np.empty(m)
        _driftless_kernel(k0, k1, path_start + start, m, grid.n, sqdt, float(y0),
                          *inv, pb, pp, db, dp, phi_left, den_left, out)
        return out

    return _run_chunks(run_chunk, M, workers, path_start)


def simulate_drift(sigma, g, x0: float, grid: PathGrid, M: int, rng: RngSpec,
                   workers: int = 1, path_start: int = 0) -> np.ndarray:
    """Terminal ``X^n_T`` for ``dX = sigma dB + g sigma^2 dt`` (path order)."""
    sb, sp = _table(sigma)
    gb, gp = _table(g)
    k0, k1 = rng.key
    sqdt = math.sqrt(grid.dt)

    def run_chunk(start, m):
        out = np.empty(m)
        _drift_kernel(k0, k1, path_start + start, m, grid.n, sqdt, grid.dt, float(x0),
                      sb, sp, gb, gp, out)
        return out

    return _run_chunks(run_chunk, M, workers, path_start)
