"""Counter-based Gaussian draws keyed by (seed, particle, step, sub-iteration).

Each key seeds a splitmix64 counter stream; normals come from a 256-layer
ziggurat fed by that stream. There is no hidden state, so any particle can be
advanced on any thread in any order and still see the same noise.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

_jit = nb.njit(cache=True, nogil=True, error_model="numpy")
_inline = nb.njit(cache=True, nogil=True, error_model="numpy", inline="always")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S8 = np.uint64(8)
_ONE = np.uint64(1)
_MASK8 = np.uint64(0xFF)
_MASK52 = np.uint64(0x000FFFFFFFFFFFFF)
_INV53 = 1.0 / 9007199254740992.0

# Marsaglia & Tsang ziggurat for the standard normal, 256 layers, 52-bit
# mantissas. R is the base-strip edge and V the common layer area.
_ZIG_R = 3.6541528853610088
_ZIG_V = 0.00492867323399


def _zig_tables():
    m = 2.0 ** 52
    k = np.zeros(256, np.uint64)
    w = np.zeros(256)
    f = np.zeros(256)
    dn = _ZIG_R
    tn = dn
    q = _ZIG_V / math.exp(-0.5 * dn * dn)
    k[0] = np.uint64(int(dn / q * m))
    k[1] = np.uint64(0)
    w[0] = q / m
    w[255] = dn / m
    f[0] = 1.0
    f[255] = math.exp(-0.5 * dn * dn)
    for i in range(254, 0, -1):
        dn = math.sqrt(-2.0 * math.log(_ZIG_V / dn + math.exp(-0.5 * dn * dn)))
        k[i + 1] = np.uint64(int(dn / tn * m))
        tn = dn
        f[i] = math.exp(-0.5 * dn * dn)
        w[i] = dn / m
    return k, w, f


_ZK, _ZW, _ZF = _zig_tables()


@_inline
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@_inline
def stream_key(seed, pid, step, sub):
    k = _mix(np.uint64(seed) + _GOLDEN)
    k = _mix(k ^ np.uint64(pid))
    k = _mix(k ^ np.uint64(step))
    return _mix(k ^ np.uint64(sub))


@_inline
def _word(key, j):
    return _mix(key + np.uint64(j + 1) * _GOLDEN)


@_inline
def _unit(key, j):
    # open interval (0, 1), 53-bit resolution
    return (np.float64(_word(key, j) >> _S11) + 0.5) * _INV53


@_inline
def _normal(key, j):
    """One standard normal starting at counter ``j``; returns (value, next j)."""
    while True:
        r = _word(key, j)
        j += 1
        idx = np.int64(r & _MASK8)
        r = r >> _S8
        neg = (r & _ONE) != 0
        rabs = (r >> _ONE) & _MASK52
        x = np.float64(rabs) * _ZW[idx]
        if neg:
            x = -x
        if rabs < _ZK[idx]:
            return x, j
        if idx == 0:
            # tail beyond R
            while True:
                xx = -math.log(_unit(key, j)) / _ZIG_R
                yy = -math.log(_unit(key, j + 1))
                j += 2
                if yy + yy > xx * xx:
                    return (-(_ZIG_R + xx) if neg else _ZIG_R + xx), j
        else:
            if (_ZF[idx - 1] - _ZF[idx]) * _unit(key, j) + _ZF[idx] < math.exp(-0.5 * x * x):
                return x, j + 1
            j += 1


@_inline
def normals6(seed, pid, step, sub, zu, zx):
    """Fill ``zu`` and ``zx`` (length 3) with standard normals for this key."""
    key = stream_key(seed, pid, step, sub)
    j = 0
    for p in range(3):
        zu[p], j = _normal(key, j)
    for p in range(3):
        zx[p], j = _normal(key, j)


def draw(seed: int, pid: int, step: int, sub: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """(zeta_U, zeta_X) for one particle sub-iteration."""
    zu = np.empty(3)
    zx = np.empty(3)
    m = (1 << 64) - 1
    normals6(np.uint64(int(seed) & m), np.uint64(int(pid) & m), np.uint64(int(step) & m),
             np.uint64(int(sub) & m), zu, zx)
    return zu, zx


@_jit
def _fill(seed, step, n, out):
    zu = np.empty(3)
    zx = np.empty(3)
    for p in range(n):
        normals6(seed, p, step, 0, zu, zx)
        out[p, 0:3] = zu
        out[p, 3:6] = zx


def draw_many(seed: int, step: int, n: int) -> np.ndarray:
    """(n, 6) normals for particles 0..n-1, sub-iteration 0."""
    out = np.empty((n, 6))
    _fill(np.uint64(seed), np.uint64(step), n, out)
    return out
