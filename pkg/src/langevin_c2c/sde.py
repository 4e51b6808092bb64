"""Exponential integration of the simplified Langevin model with P0 fields.

For frozen coefficients the position/velocity pair is an Ornstein-Uhlenbeck
process whose increments over ``dt`` are Gaussian. Writing ``x = dt / T_L``::

    U' = U e^{-x} + C T_L (1 - e^{-x}) + I^U
    X' = X + U T_L (1 - e^{-x}) + C T_L (dt - T_L (1 - e^{-x})) + I^X

with ``(I^U, I^X)`` centered Gaussians whose covariance is computed in
:func:`integral_moments`. All ``1 - e^{-x}`` factors go through ``expm1`` and
the small-``x`` brackets through their Taylor series, so the formulas stay
accurate from ``x = 1e-12`` to ``x = 1e9``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

T_MIN = 1e-30
_SERIES_MAX = 1.0


def _coefficients(first: int, sign_pattern, n_max: int = 30) -> np.ndarray:
    out = np.zeros(n_max + 1)
    for n in range(first, n_max + 1):
        out[n] = sign_pattern(n) / math.factorial(n)
    return out


# x - (1 - e^-x) = sum_{n>=2} (-1)^n x^n / n!
_H = _coefficients(2, lambda n: (-1.0) ** n)
# x - (1 - e^-x) - (1 - e^-x)^2 / 2 = sum_{n>=3} (-1)^n (2 - 2^{n-1}) x^n / n!
_B = _coefficients(3, lambda n: (-1.0) ** n * (2.0 - 2.0 ** (n - 1)))

_jit = nb.njit(cache=True, nogil=True, error_model="numpy")
_inline = nb.njit(cache=True, nogil=True, error_model="numpy", inline="always")


@_inline
def _degree(x):
    # truncation error below 1e-17 relative for each range
    if x < 1e-3:
        return 7
    if x < 0.05:
        return 11
    if x < 0.25:
        return 17
    return 27


@_inline
def _horner(c, x, lo, hi):
    s = 0.0
    for n in range(hi, lo - 1, -1):
        s = s * x + c[n]
    for _ in range(lo):
        s *= x
    return s


@_inline
def base_terms(x):
    """(e^-x, 1 - e^-x, x - (1 - e^-x), position-variance bracket), all
    accurate to a few ulps for any x >= 0."""
    if x < _SERIES_MAX:
        k = _degree(x)
        h = _horner(_H, x, 2, k)
        e1 = x - h
        return 1.0 - e1, e1, h, _horner(_B, x, 3, k)
    ex = math.exp(-x)
    e1 = 1.0 - ex
    return ex, e1, x - e1, x - e1 - 0.5 * e1 * e1


@_jit
def _bracket_x(x):
    """x - (1 - e^-x)(3 - e^-x)/2, the position-variance bracket over T_L^3."""
    return base_terms(x)[3]


@_jit
def _drift_gap(x):
    """x - (1 - e^-x)."""
    if x < _SERIES_MAX:
        return _horner(_H, x, 2, _degree(x))
    return x + math.expm1(-x)


@_jit
def _e1(x):
    if x < _SERIES_MAX:
        return x - _horner(_H, x, 2, _degree(x))
    return -math.expm1(-x)


@_inline
def _moments(c0eps, TL, e1, b):
    e2 = e1 * (2.0 - e1)
    var_u = 0.5 * c0eps * TL * e2
    cov = 0.5 * c0eps * TL * TL * e1 * e1
    t3 = c0eps * TL * TL * TL
    var_x = t3 * b
    cond = t3 * (b - e1 * e1 * e1 / (2.0 * (2.0 - e1)))
    if cond < 0.0:
        cond = 0.0
    return var_u, cov, var_x, cond


@_jit
def moments_kernel(dt, TL, c0eps):
    """(var_IU, cov_IUIX, var_IX, conditional var of I^X given I^U)."""
    _, e1, _, b = base_terms(dt / TL)
    return _moments(c0eps, TL, e1, b)


@_inline
def step_coefficients(dt, TL, c0eps):
    """(decay, 1 - decay, drift gap, sU, aX, sX) for one exponential step."""
    ex, e1, h, b = base_terms(dt / TL)
    var_u, cov, var_x, cond = _moments(c0eps, TL, e1, b)
    su = math.sqrt(var_u)
    ax = cov / su if su > 0.0 else 0.0
    sx = math.sqrt(cond) if su > 0.0 else math.sqrt(var_x)
    return ex, e1, h, su, ax, sx


@_inline
def exp_step_kernel(X, U, meanU, C, TL, c0eps, dt, zu, zx, Xn, Un):
    """One exponential step; writes the new state into ``Xn`` and ``Un``."""
    if TL <= T_MIN:
        for a in range(3):
            Xn[a] = X[a] + meanU[a] * dt
            Un[a] = meanU[a]
        return
    ex, e1, h, su, ax, sx = step_coefficients(dt, TL, c0eps)
    for a in range(3):
        Un[a] = U[a] * ex + C[a] * TL * e1 + su * zu[a]
        Xn[a] = X[a] + U[a] * TL * e1 + C[a] * TL * TL * h + ax * zu[a] + sx * zx[a]


@_inline
def exp_step_velocity_kernel(U, C, meanU, TL, c0eps, dt, zu, Un):
    if TL <= T_MIN:
        for a in range(3):
            Un[a] = meanU[a]
        return
    ex, e1, _, _ = base_terms(dt / TL)
    su = math.sqrt(0.5 * c0eps * TL * e1 * (2.0 - e1))
    for a in range(3):
        Un[a] = U[a] * ex + C[a] * TL * e1 + su * zu[a]


@_inline
def mean_endpoint_kernel(X, U, meanU, C, TL, dt, out):
    if TL <= T_MIN:
        for a in range(3):
            out[a] = X[a] + meanU[a] * dt
        return
    x = dt / TL
    if x < _SERIES_MAX:
        h = _horner(_H, x, 2, _degree(x))
        e1 = x - h
    else:
        e1 = -math.expm1(-x)
        h = x - e1
    for a in range(3):
        out[a] = X[a] + U[a] * TL * e1 + C[a] * TL * TL * h


# ---------------------------------------------------------------------------
# Python-facing API


@dataclass(frozen=True)
class CellFields:
    mean_U: np.ndarray
    T_L: float
    epsilon: float
    k: float
    C0: float
    pressure_grad_over_rho: np.ndarray

    @property
    def drift_C(self) -> np.ndarray:
        return drift_coefficient(self)


@dataclass(frozen=True)
class IntegralMoments:
    var_IU: float
    cov_IUIX: float
    var_IX: float

    def as_array(self) -> np.ndarray:
        return np.array([self.var_IU, self.cov_IUIX, self.var_IX])


@dataclass(frozen=True)
class NoiseDraw:
    zeta_U: np.ndarray
    zeta_X: np.ndarray


@dataclass
class ParticleState:
    X: np.ndarray
    U: np.ndarray
    cell: int
    active: bool = True
    rng_stream: int = 0


def drift_coefficient(fields: CellFields) -> np.ndarray:
    """Drift C with C * T_L the stationary velocity: <U>/T_L - grad<P>/rho."""
    if not fields.T_L > 0:
        raise ValueError("drift coefficient undefined for T_L <= 0; use the laminar branch")
    return np.asarray(fields.mean_U, float) / fields.T_L - np.asarray(fields.pressure_grad_over_rho, float)


def integral_moments(dt: float, T_L: float, C0: float, epsilon: float) -> IntegralMoments:
    if dt < 0 or not T_L > 0:
        raise ValueError("need dt >= 0 and T_L > 0")
    var_u, cov, var_x, _ = moments_kernel(float(dt), float(T_L), float(C0) * float(epsilon))
    return IntegralMoments(var_u, cov, var_x)


def conditional_var_ix(dt: float, T_L: float, C0: float, epsilon: float) -> float:
    """Variance of I^X left after conditioning on I^U."""
    return moments_kernel(float(dt), float(T_L), float(C0) * float(epsilon))[3]


def sample_integrals(m: IntegralMoments, draw: NoiseDraw):
    """Correlated (I^U, I^X) from two independent standard normals via the
    Cholesky factor of the moment matrix."""
    zu = np.asarray(draw.zeta_U, float)
    zx = np.asarray(draw.zeta_X, float)
    if m.var_IU <= 0.0:
        return np.zeros_like(zu), math.sqrt(max(m.var_IX, 0.0)) * zx
    su = math.sqrt(m.var_IU)
    cond = max(m.var_IX - m.cov_IUIX ** 2 / m.var_IU, 0.0)
    return su * zu, (m.cov_IUIX / su) * zu + math.sqrt(cond) * zx


def _drift_and_c0eps(fields: CellFields):
    if fields.T_L <= T_MIN:
        return np.zeros(3), 0.0
    return drift_coefficient(fields), fields.C0 * fields.epsilon


def exponential_step(state: ParticleState, fields: CellFields, dt: float, draw: NoiseDraw):
    """New ``(X, U)`` after ``dt`` with frozen cell fields."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    C, c0eps = _drift_and_c0eps(fields)
    Xn = np.empty(3)
    Un = np.empty(3)
    exp_step_kernel(np.asarray(state.X, float), np.asarray(state.U, float), np.asarray(fields.mean_U, float),
                    C, float(fields.T_L), c0eps, float(dt), np.asarray(draw.zeta_U, float),
                    np.asarray(draw.zeta_X, float), Xn, Un)
    return Xn, Un


def mean_conditional_endpoint(state: ParticleState, fields: CellFields, dt: float) -> np.ndarray:
    """Expected position after ``dt`` given the current state (noise set to zero)."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    C, _ = _drift_and_c0eps(fields)
    out = np.empty(3)
    mean_endpoint_kernel(np.asarray(state.X, float), np.asarray(state.U, float),
                         np.asarray(fields.mean_U, float), C, float(fields.T_L), float(dt), out)
    return out


def two_substep_moments(theta: float, dt: float, T_L: float, C0: float, epsilon: float) -> IntegralMoments:
    """Moments of the stochastic integrals accumulated over two chained steps
    of ``theta * dt`` and ``(1 - theta) * dt`` with independent noise."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    a = theta * dt
    b = dt - a
    m1 = integral_moments(a, T_L, C0, epsilon)
    m2 = integral_moments(b, T_L, C0, epsilon)
    decay = math.exp(-b / T_L)
    w = -math.expm1(-b / T_L)
    var_u = m1.var_IU * decay * decay + m2.var_IU
    var_x = (T_L * T_L * w * w * m1.var_IU + 2.0 * T_L * w * m1.cov_IUIX
             + m1.var_IX + m2.var_IX)
    cov = T_L * w * decay * m1.var_IU + decay * m1.cov_IUIX + m2.cov_IUIX
    return IntegralMoments(var_u, cov, var_x)
