"""Advance particles over one global time step on a mesh.

Three modes:

* ``CELL_TO_CELL``: the step is split at every face crossing. Crossing times
  come from a deterministic virtual partner that follows the mean conditional
  displacement, so they never depend on the noise drawn for the sub-step.
* ``SINGLE_STEP``: one exponential step with the fields of the start cell,
  then tracking to find the final cell.
* ``ANTICIPATING``: the split is driven by the noisy trial endpoint itself.
  Kept only to show what goes wrong when residence times see the noise.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numba as nb
import numpy as np

from . import geometry as geo
from ._nbutil import borrow
from .fields import FieldArrays, FieldProvider
from .mesh import B_INTERIOR, B_OUTLET, B_PERIODIC, Mesh
from .rng import normals6
from .sde import exp_step_kernel, exp_step_velocity_kernel, mean_endpoint_kernel

_jit = nb.njit(cache=True, nogil=True, error_model="numpy")
_inline = nb.njit(cache=True, nogil=True, error_model="numpy", inline="always")

THETA_MIN = 1e-12

MODE_C2C = 0
MODE_SINGLE = 1
MODE_ANTICIPATING = 2

P_ACTIVE = 0
P_OUTLET = 1
P_LOST = 2
P_CONTAINMENT = 3

# record columns: m, cell, theta, dt_elapsed, dt_remaining, exit_face
_REC_COLS = 6


class IntegratorMode(Enum):
    CELL_TO_CELL = MODE_C2C
    SINGLE_STEP = MODE_SINGLE
    ANTICIPATING = MODE_ANTICIPATING

    @classmethod
    def parse(cls, s: str | IntegratorMode) -> IntegratorMode:
        if isinstance(s, cls):
            return s
        key = str(s).strip().lower().replace("_", "-")
        aliases = {"cell-to-cell": cls.CELL_TO_CELL, "c2c": cls.CELL_TO_CELL,
                   "single": cls.SINGLE_STEP, "single-step": cls.SINGLE_STEP,
                   "anticipating": cls.ANTICIPATING}
        if key not in aliases:
            raise ValueError(f"unknown mode {s!r}; expected cell-to-cell, single or anticipating")
        return aliases[key]


# ---------------------------------------------------------------------------
# kernels


@_inline
def _record(rec, nrec, m, cell, theta, elapsed, remaining, face):
    if nrec < rec.shape[0]:
        rec[nrec, 0] = m
        rec[nrec, 1] = cell
        rec[nrec, 2] = theta
        rec[nrec, 3] = elapsed
        rec[nrec, 4] = remaining
        rec[nrec, 5] = face
    return nrec + 1


@_inline
def _other_cell(M, f, c):
    fc = M.face_cells[f]
    return fc[1] if fc[0] == c else fc[0]


@_inline
def _partner_cell(M, f):
    g = M.bpartner[f]
    fc = M.face_cells[g]
    return fc[0] if fc[0] >= 0 else fc[1]


@_inline
def _periodic_move(M, f, x, tmp):
    geo.apply_transform(M, f, x, tmp)
    for a in range(3):
        x[a] = tmp[a]


@_inline
def _periodic_turn(M, f, v, tmp):
    geo.rotate(M, f, v, tmp)
    for a in range(3):
        v[a] = tmp[a]


@_inline
def _finish_track(M, c, xfrom, X, U):
    """Track ``xfrom -> X`` from cell ``c``; update X, U in place.

    Returns (particle status, cell, wall stop flag).
    """
    xout = np.empty(3)
    R = np.empty((3, 3))
    st, c2, _, _, _ = geo.track_kernel(M, c, xfrom, X, xout, R, np.empty(0, np.int64), np.empty(0),
                                       np.empty((0, 3)), np.empty((4, 3)))
    if st == geo.TRACK_LOST:
        return P_LOST, c2, 0
    if st == geo.TRACK_CONTAINMENT:
        return P_CONTAINMENT, c2, 0
    u0 = U[0]
    u1 = U[1]
    u2 = U[2]
    for a in range(3):
        X[a] = xout[a]
        U[a] = R[a, 0] * u0 + R[a, 1] * u1 + R[a, 2] * u2
    if st == geo.TRACK_OUTLET:
        return P_OUTLET, c2, 0
    if st == geo.TRACK_WALL:
        return P_ACTIVE, c2, 1
    return P_ACTIVE, c2, 0


@_inline
def _noise(seed, pid, step, m, c0eps_c, zu, zx):
    if c0eps_c > 0.0:
        normals6(seed, pid, step, m, zu, zx)
    else:
        for a in range(3):
            zu[a] = 0.0
            zx[a] = 0.0


# One compiled function per mode: keeping the hot loops apart lets LLVM keep
# them tight, and the work vectors are fresh allocations so it can assume
# they do not alias the particle state.


@_jit
def single_kernel(M, meanU, C, TL, c0eps, X, U, cell, seed, pid, step, dt, rec, diag):
    zu = np.empty(3)
    zx = np.empty(3)
    Xn = np.empty(3)
    Un = np.empty(3)
    xfrom = np.empty(3)
    nrec = 0
    _noise(seed, pid, step, 0, c0eps[cell], zu, zx)
    exp_step_kernel(X, U, meanU[cell], C[cell], TL[cell], c0eps[cell], dt, zu, zx, Xn, Un)
    diag[0] = 1.0
    for a in range(3):
        diag[1 + a] = zu[a]
        diag[4 + a] = zx[a]
    nrec = _record(rec, nrec, 0, cell, 1.0, dt, 0.0, -1)
    for a in range(3):
        xfrom[a] = X[a]
        X[a] = Xn[a]
        U[a] = Un[a]
    st, c2, w = _finish_track(M, cell, xfrom, X, U)
    return st, c2, 1, nrec, w


@_jit
def c2c_kernel(M, meanU, C, TL, c0eps, X, U, cell, seed, pid, step, dt, rec, diag):
    zu = np.empty(3)
    zx = np.empty(3)
    Xn = np.empty(3)
    Un = np.empty(3)
    tmp = np.empty(3)
    Xt = np.empty(3)
    Xh = np.empty(3)
    d = np.empty(3)
    nrec = 0
    walls = 0
    cap = geo.max_transits(M)
    for a in range(3):
        Xt[a] = X[a]
    c = cell
    rem = dt
    m = 0
    tiny = 0
    while True:
        mean_endpoint_kernel(X, U, meanU[c], C[c], TL[c], rem, Xh)
        for a in range(3):
            d[a] = Xh[a] - Xt[a]
        st, f, th, _, _ = geo.transit(M, c, Xt, d, 0.0)
        if st == geo.CONTAINMENT_ERROR:
            return P_CONTAINMENT, c, m, nrec, walls
        stop = False
        if st == geo.STAYED:
            th = 1.0
            stop = True
        else:
            if th < THETA_MIN:
                th = THETA_MIN
                tiny += 1
                if tiny > geo.MAX_ZERO_EXITS:
                    return P_LOST, c, m, nrec, walls
            else:
                tiny = 0
            if th >= 1.0:
                th = 1.0
            kind = M.bkind[f]
            if kind != B_INTERIOR and kind != B_PERIODIC:
                # partner reached an outlet or a wall: it stays there and
                # the particle gets the rest of the step in this cell
                stop = True
        elapsed = rem if (stop or th == 1.0) else th * rem
        _noise(seed, pid, step, m, c0eps[c], zu, zx)
        if m == 0:
            diag[0] = th
            for a in range(3):
                diag[1 + a] = zu[a]
                diag[4 + a] = zx[a]
        exp_step_kernel(X, U, meanU[c], C[c], TL[c], c0eps[c], elapsed, zu, zx, Xn, Un)
        for a in range(3):
            X[a] = Xn[a]
            U[a] = Un[a]
        rem = rem - elapsed
        nrec = _record(rec, nrec, m, c, th, elapsed, rem, -1 if st == geo.STAYED else f)
        m += 1
        if st == geo.STAYED:
            for a in range(3):
                Xt[a] = Xh[a]
            break
        for a in range(3):
            Xt[a] = Xt[a] + th * d[a]
        if stop:
            geo.pull_inside(M, c, Xt)
            break
        if rem <= 0.0:
            break
        kind = M.bkind[f]
        if kind == B_INTERIOR:
            c = _other_cell(M, f, c)
        else:
            if M.bpartner[f] < 0:
                return P_LOST, c, m, nrec, walls
            _periodic_move(M, f, Xt, tmp)
            _periodic_move(M, f, X, tmp)
            _periodic_turn(M, f, U, tmp)
            c = _partner_cell(M, f)
        if m > cap:
            return P_LOST, c, m, nrec, walls
    st2, c2, w = _finish_track(M, c, Xt, X, U)
    return st2, c2, m, nrec, walls + w


@_jit
def anticipating_kernel(M, meanU, C, TL, c0eps, X, U, cell, seed, pid, step, dt, rec, diag):
    zu = np.empty(3)
    zx = np.empty(3)
    Xn = np.empty(3)
    Un = np.empty(3)
    tmp = np.empty(3)
    d = np.empty(3)
    nrec = 0
    walls = 0
    cap = geo.max_transits(M)
    c = cell
    rem = dt
    m = 0
    while True:
        _noise(seed, pid, step, m, c0eps[c], zu, zx)
        exp_step_kernel(X, U, meanU[c], C[c], TL[c], c0eps[c], rem, zu, zx, Xn, Un)
        for a in range(3):
            d[a] = Xn[a] - X[a]
        st, f, th, _, _ = geo.transit(M, c, X, d, 0.0)
        if st == geo.CONTAINMENT_ERROR:
            return P_CONTAINMENT, c, m, nrec, walls
        if m == 0:
            diag[0] = 1.0 if st == geo.STAYED else th
            for a in range(3):
                diag[1 + a] = zu[a]
                diag[4 + a] = zx[a]
        if st == geo.STAYED:
            for a in range(3):
                X[a] = Xn[a]
                U[a] = Un[a]
            nrec = _record(rec, nrec, m, c, 1.0, rem, 0.0, -1)
            return P_ACTIVE, c, m + 1, nrec, walls
        th = min(max(th, THETA_MIN), 1.0)
        elapsed = th * rem
        exp_step_velocity_kernel(U, C[c], meanU[c], TL[c], c0eps[c], elapsed, zu, Un)
        for a in range(3):
            X[a] = X[a] + th * d[a]
            U[a] = Un[a]
        rem = rem - elapsed
        nrec = _record(rec, nrec, m, c, th, elapsed, rem, f)
        m += 1
        kind = M.bkind[f]
        if kind == B_INTERIOR:
            c = _other_cell(M, f, c)
        elif kind == B_PERIODIC:
            if M.bpartner[f] < 0:
                return P_LOST, c, m, nrec, walls
            _periodic_move(M, f, X, tmp)
            _periodic_turn(M, f, U, tmp)
            c = _partner_cell(M, f)
        elif kind == B_OUTLET:
            return P_OUTLET, c, m, nrec, walls
        else:
            geo.pull_inside(M, c, X)
            return P_ACTIVE, c, m, nrec, walls + 1
        if rem <= 0.0 or m > cap:
            return (P_ACTIVE if rem <= 0.0 else P_LOST), c, m, nrec, walls


@_jit
def advance_kernel(mode, M, meanU, C, TL, c0eps, X, U, cell, seed, pid, step, dt, rec, diag):
    """Advance one particle in place.

    ``diag`` (length 7) receives theta and the six normals of the first
    sub-iteration. Returns (status, cell, n_subiterations, n_records,
    wall_stops).
    """
    if mode == MODE_C2C:
        return c2c_kernel(M, meanU, C, TL, c0eps, X, U, cell, seed, pid, step, dt, rec, diag)
    if mode == MODE_SINGLE:
        return single_kernel(M, meanU, C, TL, c0eps, X, U, cell, seed, pid, step, dt, rec, diag)
    return anticipating_kernel(M, meanU, C, TL, c0eps, X, U, cell, seed, pid, step, dt, rec, diag)


@_jit
def ensemble_kernel(mode, M0, meanU0, C0, TL0, c0eps0, X, U, cell, status, pid, seed, step, dt,
                    nsub, walls, diag, order, lo, hi):
    M = geo.borrow_mesh(M0)
    meanU = borrow(meanU0)
    C = borrow(C0)
    TL = borrow(TL0)
    c0eps = borrow(c0eps0)
    rec = np.empty((0, _REC_COLS))
    d7 = np.empty(7)
    x = np.empty(3)
    u = np.empty(3)
    for i in range(lo, hi):
        p = order[i]
        if status[p] != P_ACTIVE:
            nsub[p] = 0
            walls[p] = 0
            continue
        for a in range(3):
            x[a] = X[p, a]
            u[a] = U[p, a]
        st, c2, ns, _, w = advance_kernel(mode, M, meanU, C, TL, c0eps, x, u, cell[p], seed,
                                          pid[p], step, dt, rec, d7)
        for a in range(3):
            X[p, a] = x[a]
            U[p, a] = u[a]
        status[p] = st
        cell[p] = c2
        nsub[p] = ns
        walls[p] = w
        if diag.shape[0] > 0:
            for k in range(7):
                diag[p, k] = d7[k]


# ---------------------------------------------------------------------------
# Python API


@dataclass(frozen=True)
class SubIterationRecord:
    m: int
    cell: int
    theta: float
    dt_elapsed: float
    dt_remaining: float
    exit_face: int | None


@dataclass
class Ensemble:
    """Structure-of-arrays particle ensemble."""

    X: np.ndarray
    U: np.ndarray
    cell: np.ndarray
    status: np.ndarray
    pid: np.ndarray

    @classmethod
    def create(cls, X, U, cell, pid=None) -> Ensemble:
        X = np.array(X, float).reshape(-1, 3)
        n = len(X)
        U = np.array(np.broadcast_to(np.asarray(U, float), (n, 3)))
        cell = np.array(np.broadcast_to(np.asarray(cell, np.int64), (n,)))
        pid = np.arange(n, dtype=np.int64) if pid is None else np.asarray(pid, np.int64).copy()
        return cls(X, U, cell, np.zeros(n, np.int8), pid)

    def __len__(self) -> int:
        return len(self.X)

    @property
    def active(self) -> np.ndarray:
        return self.status == P_ACTIVE

    def copy(self) -> Ensemble:
        return Ensemble(self.X.copy(), self.U.copy(), self.cell.copy(), self.status.copy(),
                        self.pid.copy())


@dataclass
class StepReport:
    step: int
    n_active: int
    n_subiters_total: int
    max_subiters: int
    n_wall_stops: int
    n_lost: int
    n_outlet: int = 0
    subiter_hist: dict[int, int] = field(default_factory=dict)

    CSV_HEADER = "step,n_active,n_subiters_total,max_subiters,n_wall_stops,n_lost"

    def csv_row(self) -> str:
        return (f"{self.step},{self.n_active},{self.n_subiters_total},{self.max_subiters},"
                f"{self.n_wall_stops},{self.n_lost}")


class LostParticleError(RuntimeError):
    def __init__(self, report: StepReport):
        super().__init__(f"step {report.step}: {report.n_lost} particle(s) lost")
        self.report = report


def _prep(mesh: Mesh, provider: FieldProvider | FieldArrays) -> FieldArrays:
    if isinstance(provider, FieldArrays):
        return provider
    return provider.arrays(mesh)


def advance(mode, particle, mesh: Mesh, field_provider, dt: float, rng=(0, 0), record_limit: int = 4096):
    """Advance a single particle and return ``(new_state, records, status)``.

    ``particle`` is a :class:`~langevin_c2c.sde.ParticleState`; ``rng`` is a
    ``(seed, step)`` pair and the stream id is ``particle.rng_stream``.
    """
    from .sde import ParticleState

    mode = IntegratorMode.parse(mode)
    if not particle.active:
        raise ValueError("particle is inactive")
    if not dt > 0:
        raise ValueError("dt must be positive")
    F = _prep(mesh, field_provider)
    X = np.array(particle.X, float)
    U = np.array(particle.U, float)
    rec = np.zeros((record_limit, _REC_COLS))
    diag = np.empty(7)
    seed, step = rng
    st, c, _, nrec, _ = advance_kernel(mode.value, mesh.arrays, F.mean_U, F.drift_C, F.T_L, F.c0eps, X, U,
                                       int(particle.cell), int(seed), int(particle.rng_stream), int(step),
                                       float(dt), rec, diag)
    records = [SubIterationRecord(int(r[0]), int(r[1]), float(r[2]), float(r[3]), float(r[4]),
                                  None if r[5] < 0 else int(r[5])) for r in rec[:min(nrec, record_limit)]]
    new = ParticleState(X, U, int(c), st == P_ACTIVE, particle.rng_stream)
    return new, records, _STATUS_NAMES[st]


_STATUS_NAMES = {P_ACTIVE: "active", P_OUTLET: "outlet", P_LOST: "lost", P_CONTAINMENT: "containment"}


def step_ensemble(mode, particles: Ensemble, mesh: Mesh, field_provider, dt: float, master_seed: int,
                  step_index: int, workers: int = 1, strict: bool = False,
                  diagnostics: np.ndarray | None = None) -> StepReport:
    """Advance every active particle in place and return a step report.

    The noise for particle ``pid`` is keyed on (master_seed, pid, step_index,
    sub-iteration), so the result does not depend on ``workers``.
    """
    mode = IntegratorMode.parse(mode)
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = len(particles)
    F = _prep(mesh, field_provider)
    nsub = np.zeros(n, np.int64)
    walls = np.zeros(n, np.int64)
    diag = np.empty((0, 7)) if diagnostics is None else diagnostics
    args = (mode.value, mesh.arrays, F.mean_U, F.drift_C, F.T_L, F.c0eps, particles.X, particles.U,
            particles.cell, particles.status, particles.pid, int(master_seed), int(step_index), float(dt),
            nsub, walls, diag, np.argsort(particles.cell, kind="stable"))
    was_active = particles.status == P_ACTIVE
    if n:
        if workers <= 1:
            ensemble_kernel(*args, 0, n)
        else:
            edges = np.linspace(0, n, workers * 4 + 1).astype(int)
            with ThreadPoolExecutor(max_workers=workers) as ex:
                futs = [ex.submit(ensemble_kernel, *args, int(a), int(b))
                        for a, b in zip(edges[:-1], edges[1:]) if b > a]
                for fu in futs:
                    fu.result()
    st = particles.status
    lost = int(np.count_nonzero(was_active & ((st == P_LOST) | (st == P_CONTAINMENT))))
    vals, counts = np.unique(nsub[was_active], return_counts=True)
    report = StepReport(
        step=int(step_index),
        n_active=int(np.count_nonzero(st == P_ACTIVE)),
        n_subiters_total=int(nsub.sum()),
        max_subiters=int(nsub.max()) if n else 0,
        n_wall_stops=int(walls.sum()),
        n_lost=lost,
        n_outlet=int(np.count_nonzero(was_active & (st == P_OUTLET))),
        subiter_hist={int(v): int(c) for v, c in zip(vals, counts)},
    )
    if strict and lost:
        raise LostParticleError(report)
    return report


def default_workers() -> int:
    import os

    return max(1, min(8, os.cpu_count() or 1))


__all__ = [
    "IntegratorMode", "SubIterationRecord", "Ensemble", "StepReport", "LostParticleError",
    "advance", "step_ensemble", "default_workers", "THETA_MIN",
]
