"""Ensemble statistics, analytic references and confidence envelopes."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .mesh import Mesh
from .sde import moments_kernel

Z99 = 2.576

MOMENTS_HEADER = ["t", "t_star", "xx", "xu", "uu", "xx_exact", "xu_exact", "uu_exact",
                  "ci_xx", "ci_xu", "ci_uu", "n_active"]
CONCENTRATION_HEADER = ["t_plus", "bin_index", "r_center", "c_plus"]
DISTANCE_HEADER = ["t_star", "d_star_max"]


class EmptyEnsembleError(ValueError):
    pass


def _state(particles):
    """(X, U, cell) of the active particles of an Ensemble or an (X, U[, cell]) tuple."""
    if hasattr(particles, "status"):
        act = particles.status == 0
        return particles.X[act], particles.U[act], particles.cell[act]
    X, U, *rest = particles
    X = np.asarray(X, float).reshape(-1, 3)
    U = np.asarray(U, float).reshape(-1, 3)
    cell = np.asarray(rest[0]) if rest else None
    return X, U, cell


@dataclass(frozen=True)
class MomentRecord:
    """Second moments about the source, one value per component."""

    t: float
    t_star: float
    xx: np.ndarray
    xu: np.ndarray
    uu: np.ndarray
    n_active: int


def moments(particles, source_point, t: float = 0.0, T_L: float = 1.0) -> MomentRecord:
    X, U, _ = _state(particles)
    if len(X) == 0:
        raise EmptyEnsembleError("no active particles")
    dX = X - np.asarray(source_point, float)
    n = len(X)
    # np.sum reduces pairwise, so the result does not depend on chunking
    xx = np.sum(dX * dX, axis=0) / n
    xu = np.sum(dX * U, axis=0) / n
    uu = np.sum(U * U, axis=0) / n
    return MomentRecord(float(t), float(t) / T_L, xx, xu, uu, n)


def analytic_moments(t: float, U_alpha: float, T_L: float) -> tuple[float, float, float]:
    """Exact (xx, xu, uu) per component for a point source released at rest
    in homogeneous turbulence with zero mean flow."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return 0.0, 0.0, 0.0
    var_u, cov, var_x, _ = moments_kernel(float(t), float(T_L), 2.0 * U_alpha ** 2 / T_L)
    return var_x, cov, var_u


def ci_envelope(t: float, N: int, U_alpha: float, T_L: float) -> tuple[float, float, float]:
    """99% half-widths of the (xx, xu, uu) estimators for N particles.

    uu uses Var(U^2) = 2 <U^2>^2 at the stationary level, xu the growing
    variance 2 U_a^4 T_L^2 (1 + t / T_L) and xx the Gaussian identity
    Var(X^2) = 2 <X^2>^2.
    """
    if N < 2:
        raise ValueError("need N >= 2")
    xx, _, _ = analytic_moments(t, U_alpha, T_L)
    c0eps = 2.0 * U_alpha ** 2 / T_L
    var_uu = 2.0 * U_alpha ** 4
    var_xu = 0.5 * c0eps ** 2 * T_L ** 4 * (1.0 + t / T_L)
    var_xx = 2.0 * xx ** 2
    k = Z99 / math.sqrt(N)
    return k * math.sqrt(var_xx), k * math.sqrt(var_xu), k * math.sqrt(var_uu)


@dataclass(frozen=True)
class ConcentrationProfile:
    r: np.ndarray
    c_plus: np.ndarray
    t_plus: float
    counts: np.ndarray


def concentration_radial(particles, ring_of_cell: np.ndarray, expected: np.ndarray,
                         r_centers: np.ndarray | None = None, t_plus: float = 0.0) -> ConcentrationProfile:
    """Particle counts per radial ring divided by the expected count.

    ``expected[k]`` is the count ring ``k`` would hold under a uniform
    concentration, e.g. the initial count times the ring's share of the
    domain.
    """
    _, _, cell = _state(particles)
    if cell is None:
        raise ValueError("particles must carry cell ids")
    expected = np.asarray(expected, float)
    ring = np.asarray(ring_of_cell)[cell]
    counts = np.bincount(ring, minlength=len(expected))
    r = np.arange(len(expected), dtype=float) if r_centers is None else np.asarray(r_centers, float)
    return ConcentrationProfile(r, counts / expected, float(t_plus), counts)


def ring_expectation(ring_of_cell: np.ndarray, weight: np.ndarray, n_total: int) -> np.ndarray:
    """Expected count per ring for ``n_total`` particles spread in proportion
    to ``weight`` (cell volume for a uniform concentration)."""
    w = np.bincount(ring_of_cell, weights=weight)
    return n_total * w / w.sum()


def mean_concentration_error(profiles: ConcentrationProfile | Iterable[ConcentrationProfile],
                             analytic_c_plus: float = 1.0) -> float:
    """Mean of |c+ - analytic| over bins and output times."""
    if isinstance(profiles, ConcentrationProfile):
        profiles = [profiles]
    errs = [np.abs(p.c_plus - analytic_c_plus) for p in profiles]
    if not errs:
        raise ValueError("no profiles")
    return float(np.mean(np.concatenate(errs)))


@dataclass(frozen=True)
class DistanceDiagnostic:
    t_star: float
    d_star_max: float


def dimensionless_distance(X: np.ndarray, cell: np.ndarray, mesh: Mesh) -> np.ndarray:
    """Distance to the cell center over the largest center-to-vertex distance."""
    c = np.asarray(cell)
    return np.linalg.norm(np.asarray(X, float) - mesh.cell_center[c], axis=1) / mesh.cell_radius[c]


def max_dimensionless_distance(particles, mesh: Mesh, t_star: float = 0.0) -> DistanceDiagnostic:
    X, _, cell = _state(particles)
    if cell is None:
        raise ValueError("particles must carry cell ids")
    d = dimensionless_distance(X, cell, mesh) if len(X) else np.zeros(0)
    return DistanceDiagnostic(float(t_star), float(d.max()) if d.size else 0.0)


# ---------------------------------------------------------------------------
# CSV output


def moments_row(rec: MomentRecord, N: int, U_alpha: float, T_L: float, component: int = 0) -> list:
    ex = analytic_moments(rec.t, U_alpha, T_L)
    ci = ci_envelope(rec.t, max(N, 2), U_alpha, T_L)
    k = component
    return [rec.t, rec.t_star, rec.xx[k], rec.xu[k], rec.uu[k], *ex, *ci, rec.n_active]


def write_moments_csv(path: str | Path, rows: Sequence[Sequence]) -> None:
    _write(path, MOMENTS_HEADER, rows)


def write_concentration_csv(path: str | Path, profiles: Sequence[ConcentrationProfile]) -> None:
    rows = [[p.t_plus, k, p.r[k], p.c_plus[k]] for p in profiles for k in range(len(p.c_plus))]
    _write(path, CONCENTRATION_HEADER, rows)


def write_distance_csv(path: str | Path, diags: Sequence[DistanceDiagnostic]) -> None:
    _write(path, DISTANCE_HEADER, [[d.t_star, d.d_star_max] for d in diags])


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Columns of a numeric CSV written by this module."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]).reshape(len(body), len(head))
    return {h: data[:, i] for i, h in enumerate(head)}
