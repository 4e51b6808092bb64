"""P0 mean-field providers: calibrated HIT, analytic Couette, CSV tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .mesh import Mesh
from .sde import T_MIN, CellFields

TABLE_HEADER = ["cell_id", "ux", "uy", "uz", "tl", "eps", "k", "c0", "gpx", "gpy", "gpz"]


class FieldArrays(NamedTuple):
    """Per-cell arrays consumed by the integration kernels."""

    mean_U: np.ndarray  # (n, 3)
    drift_C: np.ndarray  # (n, 3); zero where T_L is degenerate
    T_L: np.ndarray
    c0eps: np.ndarray


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class _Table:
    mean_U: np.ndarray
    T_L: np.ndarray
    epsilon: np.ndarray
    k: np.ndarray
    C0: np.ndarray
    grad_p: np.ndarray

    def __post_init__(self):
        for a in (self.mean_U, self.T_L, self.epsilon, self.k, self.C0, self.grad_p):
            a.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.T_L)

    def fields(self, c: int) -> CellFields:
        if not 0 <= c < self.n:
            raise FieldError(f"unknown cell id {c}")
        return CellFields(self.mean_U[c].copy(), float(self.T_L[c]), float(self.epsilon[c]),
                          float(self.k[c]), float(self.C0[c]), self.grad_p[c].copy())

    def arrays(self) -> FieldArrays:
        TL = self.T_L.copy()
        live = TL > T_MIN
        C = np.zeros_like(self.mean_U)
        C[live] = self.mean_U[live] / TL[live, None] - self.grad_p[live]
        c0eps = np.where(live, self.C0 * self.epsilon, 0.0)
        return FieldArrays(np.ascontiguousarray(self.mean_U), C, TL, c0eps)


class FieldProvider:
    """Base class. Subclasses expose constant-per-cell fields."""

    def query(self, cell_id: int) -> CellFields:
        raise NotImplementedError

    def arrays(self, mesh: Mesh) -> FieldArrays:
        raise NotImplementedError


@dataclass(frozen=True)
class HIT(FieldProvider):
    """Homogeneous isotropic turbulence with zero mean flow.

    The dissipation follows from the requested velocity scale and timescale,
    eps = 2 U_a^2 / (C0 T_L), so the model's stationary variance is U_a^2
    whatever C0 is.
    """

    U_alpha: float
    T_L: float
    C0: float = 2.1

    def __post_init__(self):
        for name in ("U_alpha", "T_L", "C0"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise FieldError(f"{name} must be positive, got {v}")

    @property
    def epsilon(self) -> float:
        return 2.0 * self.U_alpha ** 2 / (self.C0 * self.T_L)

    @property
    def k(self) -> float:
        return 1.5 * self.U_alpha ** 2

    def query(self, cell_id: int) -> CellFields:
        if cell_id < 0:
            raise FieldError(f"unknown cell id {cell_id}")
        return CellFields(np.zeros(3), self.T_L, self.epsilon, self.k, self.C0, np.zeros(3))

    def arrays(self, mesh: Mesh) -> FieldArrays:
        n = mesh.n_cells
        return FieldArrays(np.zeros((n, 3)), np.zeros((n, 3)), np.full(n, self.T_L),
                           np.full(n, self.C0 * self.epsilon))


def hit_provider(U_alpha: float, T_L: float, C0: float = 2.1) -> HIT:
    return HIT(float(U_alpha), float(T_L), float(C0))


def couette_speed(r, r_in: float, r_out: float, omega_in: float):
    """Azimuthal speed of laminar flow between a rotating inner cylinder and a
    fixed outer one."""
    r = np.asarray(r, dtype=float)
    return omega_in * r_in / (r_in / r_out - r_out / r_in) * (r / r_out - r_out / r)


@dataclass(frozen=True)
class CouetteAnalytic(FieldProvider):
    """Laminar Couette profile sampled once at each cell center (axis = z)."""

    r_in: float
    r_out: float
    omega_in: float
    mesh: Mesh = field(repr=False, compare=False)
    _table: _Table = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0 < self.r_in < self.r_out):
            raise FieldError(f"need 0 < r_in < r_out, got {self.r_in}, {self.r_out}")
        xc = self.mesh.arrays.cell_center
        r = np.hypot(xc[:, 0], xc[:, 1])
        if np.any(r == 0):
            raise FieldError("cell center on the rotation axis")
        speed = couette_speed(r, self.r_in, self.r_out, self.omega_in)
        U = np.zeros((len(r), 3))
        U[:, 0] = -speed * xc[:, 1] / r
        U[:, 1] = speed * xc[:, 0] / r
        n = len(r)
        z = np.zeros(n)
        object.__setattr__(self, "_table", _Table(U, z, z.copy(), z.copy(), z.copy(), np.zeros((n, 3))))

    def query(self, cell_id: int) -> CellFields:
        return self._table.fields(cell_id)

    def arrays(self, mesh: Mesh) -> FieldArrays:
        if mesh is not self.mesh and mesh != self.mesh:
            raise FieldError("provider was sampled on a different mesh")
        return self._table.arrays()


def couette_provider(r_in: float, r_out: float, omega_in: float, mesh: Mesh) -> CouetteAnalytic:
    return CouetteAnalytic(float(r_in), float(r_out), float(omega_in), mesh)


@dataclass(frozen=True)
class FromTable(FieldProvider):
    """Arbitrary per-cell fields, typically loaded from CSV."""

    table: _Table

    @classmethod
    def from_fields(cls, cells: list[CellFields]) -> FromTable:
        return cls(_Table(
            np.array([c.mean_U for c in cells], float).reshape(-1, 3),
            np.array([c.T_L for c in cells], float),
            np.array([c.epsilon for c in cells], float),
            np.array([c.k for c in cells], float),
            np.array([c.C0 for c in cells], float),
            np.array([c.pressure_grad_over_rho for c in cells], float).reshape(-1, 3),
        ))

    def query(self, cell_id: int) -> CellFields:
        return self.table.fields(cell_id)

    def arrays(self, mesh: Mesh) -> FieldArrays:
        if mesh.n_cells != self.table.n:
            raise FieldError(f"table has {self.table.n} cells, mesh has {mesh.n_cells}")
        return self.table.arrays()


def tabulate(provider: FieldProvider, mesh: Mesh) -> FromTable:
    return FromTable.from_fields([provider.query(c) for c in range(mesh.n_cells)])


def write_table(provider: FieldProvider, mesh: Mesh, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_HEADER)
        for c in range(mesh.n_cells):
            f = provider.query(c)
            vals = [*f.mean_U, f.T_L, f.epsilon, f.k, f.C0, *f.pressure_grad_over_rho]
            w.writerow([c, *(repr(float(v)) for v in vals)])


def read_table(path: str | Path) -> FromTable:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TABLE_HEADER:
        raise FieldError(f"{path}: expected header {','.join(TABLE_HEADER)}")
    body = rows[1:]
    ids = [int(r[0]) for r in body]
    if ids != list(range(len(body))):
        raise FieldError(f"{path}: cell ids must run 0..n-1 in order")
    a = np.array([[float(v) for v in r[1:]] for r in body]).reshape(-1, 10)
    return FromTable(_Table(a[:, 0:3].copy(), a[:, 3].copy(), a[:, 4].copy(), a[:, 5].copy(),
                            a[:, 6].copy(), a[:, 7:10].copy()))


def query(provider: FieldProvider, cell_id: int) -> CellFields:
    return provider.query(cell_id)
