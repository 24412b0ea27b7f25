"""Counter-based Gaussian streams.

The standard normal used by path ``p`` at step ``k`` is a pure function of
``(key, p, k)``: Philox4x64-10 is applied to the counter ``(k // 4, p, 0, 0)``
and the four output words are turned into four normals by Box-Muller.
Nothing depends on the order in which paths are generated, so any
partitioning of the paths across workers reproduces the same numbers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numba as nb
import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 2.0**-53
_TWO_PI = 2.0 * np.pi
LANES = 4


@nb.njit(inline="always")
def _mulhilo(a, b):
    lo = a * b
    a0, a1 = a & _LO32, a >> _S32
    b0, b1 = b & _LO32, b >> _S32
    p00, p01, p10, p11 = a0 * b0, a0 * b1, a1 * b0, a1 * b1
    mid = (p00 >> _S32) + (p01 & _LO32) + (p10 & _LO32)
    hi = p11 + (p01 >> _S32) + (p10 >> _S32) + (mid >> _S32)
    return hi, lo


@nb.njit(inline="always")
def _philox(c0, c1, c2, c3, k0, k1):
    for r in range(10):
        if r > 0:
            k0 += _W0
            k1 += _W1
        h0, l0 = _mulhilo(_M0, c0)
        h1, l1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = h1 ^ c1 ^ k0, l1, h0 ^ c3 ^ k1, l0
    return c0, c1, c2, c3


@nb.njit(inline="always")
def _uniform(x):
    # 53 random bits, shifted off zero so log() is finite
    return ((x >> _S11) + 0.5) * _TWO_M53


@nb.njit(inline="always")
def normal_block(k0, k1, block, path):
    """Four standard normals for counter ``(block, path, 0, 0)``."""
    x0, x1, x2, x3 = _philox(np.uint64(block), np.uint64(path), np.uint64(0), np.uint64(0), k0, k1)
    r0 = np.sqrt(-2.0 * np.log(_uniform(x0)))
    t0 = _TWO_PI * _uniform(x1)
    r1 = np.sqrt(-2.0 * np.log(_uniform(x2)))
    t1 = _TWO_PI * _uniform(x3)
    return r0 * np.cos(t0), r0 * np.sin(t0), r1 * np.cos(t1), r1 * np.sin(t1)


@nb.njit(nogil=True, cache=True)
def _fill_normals(k0, k1, path0, n_paths, n_steps, out):
    nblocks = (n_steps + LANES - 1) // LANES
    for j in range(n_paths):
        p = path0 + j
        for b in range(nblocks):
            z = normal_block(k0, k1, b, p)
            base = LANES * b
            for lane in range(LANES):
                k = base + lane
                if k < n_steps:
                    out[k, j] = z[lane]


@nb.njit(cache=True)
def _philox_py(c0, c1, c2, c3, k0, k1):
    return _philox(c0, c1, c2, c3, k0, k1)


def philox4x64(counter, key) -> np.ndarray:
    """One Philox4x64-10 block; exposed for testing against reference generators."""
    c = [np.uint64(v) for v in counter]
    k = [np.uint64(v) for v in key]
    return np.array(_philox_py(c[0], c[1], c[2], c[3], k[0], k[1]), dtype=np.uint64)


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)) and tag >= 0:
        return int(tag)
    digest = hashlib.blake2b(repr(tag).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RngSpec:
    """Master seed plus a stream label; the Philox key is derived from both."""

    seed: int
    stream: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream", tuple(self.stream))

    def child(self, *tags) -> "RngSpec":
        return RngSpec(self.seed, self.stream + tags)

    @property
    def key(self) -> tuple:
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(_tag_to_int(t) for t in self.stream))
        k = ss.generate_state(2, dtype=np.uint64)
        return np.uint64(k[0]), np.uint64(k[1])


def standard_normals(rng: RngSpec, path_start: int, n_paths: int, n_steps: int) -> np.ndarray:
    """Array of shape ``(n_steps, n_paths)``; column ``j`` belongs to path ``path_start + j``."""
    out = np.empty((n_steps, n_paths), dtype=np.float64)
    k0, k1 = rng.key
    _fill_normals(k0, k1, int(path_start), int(n_paths), int(n_steps), out)
    return out
