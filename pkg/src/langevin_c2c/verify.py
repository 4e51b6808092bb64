"""Self-check suite run by ``langevin-c2c verify``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geometry as geo
from . import mesh as meshmod
from .fields import hit_provider
from .integrator import Ensemble, step_ensemble
from .sde import CellFields, NoiseDraw, ParticleState, exponential_step, integral_moments, two_substep_moments
from .statistics import analytic_moments, ci_envelope, moments

SPLIT_THETAS = np.round(np.arange(101) * 0.01, 2)
SPLIT_RATIOS = (1e-6, 1e-3, 1.0, 1e3, 1e6)


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.ok else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f} s)"


@dataclass
class VerifyReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def text(self) -> str:
        return "\n".join(c.line() for c in self.checks)


def split_consistency_deviation(thetas=SPLIT_THETAS, ratios=SPLIT_RATIOS, T_L: float = 1.0,
                                C0: float = 2.1, epsilon: float = 1.0) -> float:
    """Largest relative gap between the chained and the one-shot moments."""
    worst = 0.0
    for r in ratios:
        dt = r * T_L
        ref = integral_moments(dt, T_L, C0, epsilon).as_array()
        for th in thetas:
            got = two_substep_moments(float(th), dt, T_L, C0, epsilon).as_array()
            worst = max(worst, float(np.max(np.abs(got - ref) / np.abs(ref))))
    return worst


def check_split_consistency() -> tuple[bool, str]:
    dev = split_consistency_deviation()
    return dev < 1e-10, f"max relative deviation {dev:.3e}"


def cell_parity_failures(mesh: meshmod.Mesh, n_per_cell: int, rng: np.random.Generator) -> int:
    """Segments started inside each cell whose crossing counts do not show
    exactly one way out ahead and one way in behind."""
    bad = 0
    for c in range(mesh.n_cells):
        pts = meshmod.sample_in_cell(mesh, c, n_per_cell, rng)
        dirs = rng.normal(size=(n_per_cell, 3)) * mesh.cell_size[c] * 3.0
        for p, d in zip(pts, dirs):
            if isinstance(geo.cell_transit(mesh, c, p, p + d), geo.ContainmentError):
                bad += 1
    return bad


def check_partition(seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    bad = 0
    for m in (meshmod.build_perturbed_hexa(3, 0.3, seed), meshmod.build_tetra_box(2)):
        bad += cell_parity_failures(m, 20, rng)
    return bad == 0, f"{bad} parity failures on warped hexa and tetra cells"


def check_axis_theta() -> tuple[bool, str]:
    m = meshmod.build_box(1, length=1.0, periodic=False)
    out = geo.cell_transit(m, 0, [0.5, 0.5, 0.5], [1.5, 0.5, 0.5])
    ok = isinstance(out, geo.Exited) and out.event.theta == 0.5
    return ok, f"theta {getattr(getattr(out, 'event', None), 'theta', None)} (exact 0.5)"


def check_fixed_points() -> tuple[bool, str]:
    """A particle moving with the mean flow and no diffusion keeps its velocity."""
    U = np.array([0.3, -0.2, 0.1])
    f = CellFields(U, 1.0, 0.0, 0.0, 2.1, np.zeros(3))
    z = NoiseDraw(np.zeros(3), np.zeros(3))
    Xn, Un = exponential_step(ParticleState(np.zeros(3), U, 0), f, 7.0, z)
    rest = CellFields(np.zeros(3), 1.0, 0.0, 0.0, 2.1, np.zeros(3))
    X0 = np.array([1.0, 2.0, 3.0])
    Xr, Ur = exponential_step(ParticleState(X0, np.zeros(3), 0), rest, 7.0, z)
    err = max(np.max(np.abs(Un - U)), np.max(np.abs(Xn - 7.0 * U)), np.max(np.abs(Xr - X0)), np.max(np.abs(Ur)))
    return err < 1e-14, f"max deviation {err:.2e}"


def check_ci_coverage(n: int = 4000, steps: int = 40, seed: int = 7) -> tuple[bool, str]:
    dt = 0.05
    dx = dt / 50
    half = math.ceil(6.0 * math.sqrt(analytic_moments(steps * dt, 1.0, 1.0)[0]) / dx)
    mesh = meshmod.build_cartesian_slab(2 * half + 1, dx, 100.0)
    x0 = mesh.cell_center[half].copy()
    E = Ensemble.create(np.tile(x0, (n, 1)), 0.0, half)
    F = hit_provider(1.0, 1.0)
    exc = 0
    for k in range(steps):
        step_ensemble("cell-to-cell", E, mesh, F, dt, seed, k)
        t = (k + 1) * dt
        rec = moments(E, x0, t)
        ex = analytic_moments(t, 1.0, 1.0)
        ci = ci_envelope(t, n, 1.0, 1.0)
        got = (rec.xx[0], rec.xu[0], rec.uu[0])
        exc += any(abs(g - e) > c for g, e, c in zip(got, ex, ci))
    return exc <= 3, f"{exc} CI excursions in {steps} checks (limit 3)"


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "split consistency": check_split_consistency,
    "edge partition and parity": check_partition,
    "axis-aligned theta": check_axis_theta,
    "fixed points": check_fixed_points,
    "CI coverage smoke": check_ci_coverage,
}


def verify(echo: Callable[[str], None] | None = None) -> VerifyReport:
    rep = VerifyReport()
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, not an abort
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        res = CheckResult(name, bool(ok), detail, time.perf_counter() - t0)
        rep.checks.append(res)
        if echo:
            echo(res.line())
    return rep
