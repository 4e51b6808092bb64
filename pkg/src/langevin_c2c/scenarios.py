"""Validation scenarios: configuration, execution and CSV output."""

from __future__ import annotations

import configparser
import csv
import math
import time
from collections import Counter
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from . import mesh as meshmod
from .fields import couette_provider, couette_speed, hit_provider
from .integrator import Ensemble, IntegratorMode, LostParticleError, StepReport, default_workers, step_ensemble
from .statistics import (
    DistanceDiagnostic,
    concentration_radial,
    max_dimensionless_distance,
    mean_concentration_error,
    moments,
    moments_row,
    ring_expectation,
    write_concentration_csv,
    write_distance_csv,
    write_moments_csv,
)

MAX_OUTPUTS = 200
CONVERGENCE_HEADER = ["dt", "dt_plus", "t_final", "n_steps", "mean_error", "mc_floor"]
RADIUS_HEADER = ["step", "t", "t_plus", "particle", "r0", "r", "rel_drift"]


class ConfigError(ValueError):
    pass


class Scenario(Enum):
    POINT_SOURCE_BALLISTIC = "point-source-ballistic"
    POINT_SOURCE_DIFFUSIVE = "point-source-diffusive"
    COUETTE_SINGLE_PARTICLE = "couette-single"
    COUETTE_CONCENTRATION = "couette-concentration"
    COUETTE_CONVERGENCE = "couette-convergence"
    MESH_ROBUSTNESS = "mesh-robustness"

    @classmethod
    def parse(cls, s: str | Scenario) -> Scenario:
        if isinstance(s, Scenario):
            return s
        key = str(s).strip().lower().replace("_", "-")
        for v in cls:
            if v.value == key or v.name.lower().replace("_", "-") == key:
                return v
        raise ConfigError(f"unknown scenario {s!r}; choose from {[v.value for v in cls]}")


MESH_KINDS = ("slab", "box", "perturbed-hexa", "tetra-box", "annulus")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario
    mode: IntegratorMode = IntegratorMode.CELL_TO_CELL
    n_particles: int = 100_000
    dt: float = 0.05
    n_steps: int = 120
    # point source / robustness
    U_alpha: float = 1.0
    T_L: float = 1.0
    C0: float = 2.1
    cells_per_flight: float = 50.0
    transverse_extent: float = 100.0
    mesh_kind: str = "slab"
    n_per_side: int = 12
    box_length: float = 2.0
    jitter: float = 0.3
    # Couette
    r_in: float = 1.0
    r_out: float = 2.0
    omega_in: float = 1.0
    n_theta: int = 360
    n_r: int = 21
    depth: float = 0.05
    radii: tuple[float, ...] = (1.05, 1.5)
    t_plus_outputs: tuple[float, ...] = (275.0, 1100.0, 2200.0)
    dt_grid: tuple[float, ...] = ()
    t_end: float = 41.0
    # run control
    seed: int = 1
    output_dir: Path = Path("out")
    strict: bool = False
    workers: int = 1
    component: str = "x"
    plots: bool = True

    @property
    def dtheta(self) -> float:
        return 2.0 * math.pi / self.n_theta

    @property
    def dt_plus(self) -> float:
        return self.dt * self.omega_in / self.dtheta

    def validate(self) -> ScenarioConfig:
        if self.n_particles < 1 or self.n_steps < 1:
            raise ConfigError("n_particles and n_steps must be positive")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.component not in ("x", "y", "z", "all"):
            raise ConfigError("component must be x, y, z or all")
        sc = self.scenario
        if sc in (Scenario.POINT_SOURCE_BALLISTIC, Scenario.POINT_SOURCE_DIFFUSIVE, Scenario.MESH_ROBUSTNESS):
            if not (self.U_alpha > 0 and self.T_L > 0 and self.C0 > 0):
                raise ConfigError("U_alpha, T_L and C0 must be positive")
            if self.cells_per_flight <= 0 or self.transverse_extent <= 0:
                raise ConfigError("cells_per_flight and transverse_extent must be positive")
        if sc is Scenario.MESH_ROBUSTNESS:
            if self.mesh_kind not in MESH_KINDS:
                raise ConfigError(f"mesh_kind must be one of {MESH_KINDS}")
            if self.n_per_side < 1 or self.box_length <= 0 or not 0 <= self.jitter < 0.5:
                raise ConfigError("bad box mesh parameters")
        if sc.value.startswith("couette") or (sc is Scenario.MESH_ROBUSTNESS and self.mesh_kind == "annulus"):
            if not (0 < self.r_in < self.r_out) or self.depth <= 0:
                raise ConfigError("need 0 < r_in < r_out and depth > 0")
            if self.n_theta < 3 or self.n_r < 1:
                raise ConfigError("need n_theta >= 3 and n_r >= 1")
        if sc is Scenario.COUETTE_SINGLE_PARTICLE:
            if not self.radii or not all(self.r_in < r < self.r_out for r in self.radii):
                raise ConfigError("radii must lie strictly between r_in and r_out")
        if sc is Scenario.COUETTE_CONCENTRATION and not self.t_plus_outputs:
            raise ConfigError("t_plus_outputs is empty")
        if sc is Scenario.COUETTE_CONVERGENCE:
            if not self.dt_grid or min(self.dt_grid) <= 0 or self.t_end <= 0:
                raise ConfigError("dt_grid must be non-empty and positive, t_end > 0")
        return self


def _couette_dt(dt_plus: float, n_theta: int = 360, omega_in: float = 1.0) -> float:
    return dt_plus * (2.0 * math.pi / n_theta) / omega_in


_DEFAULTS: dict[Scenario, dict[str, Any]] = {
    Scenario.POINT_SOURCE_BALLISTIC: dict(n_particles=100_000, dt=0.05, n_steps=120, cells_per_flight=50.0),
    Scenario.POINT_SOURCE_DIFFUSIVE: dict(n_particles=100_000, dt=200.0, n_steps=120, cells_per_flight=20.0),
    Scenario.COUETTE_SINGLE_PARTICLE: dict(n_particles=2, dt=1.024, n_steps=400),
    Scenario.COUETTE_CONCENTRATION: dict(n_particles=200_000, dt=_couette_dt(5.5), n_steps=400),
    Scenario.COUETTE_CONVERGENCE: dict(n_particles=200_000, dt=1.0, n_steps=1,
                                       dt_grid=tuple(float(v) for v in np.geomspace(0.05, 200.0, 6))),
    Scenario.MESH_ROBUSTNESS: dict(n_particles=100_000, dt=0.05, n_steps=200, mesh_kind="perturbed-hexa",
                                   cells_per_flight=1.0),
}


def default_config(scenario, **overrides) -> ScenarioConfig:
    sc = Scenario.parse(scenario)
    values = dict(_DEFAULTS[sc])
    values.update(overrides)
    return _coerce(ScenarioConfig(scenario=sc), values).validate()


def _coerce(cfg: ScenarioConfig, values: dict[str, Any]) -> ScenarioConfig:
    # INI keys arrive lower-cased
    names = {f.name.lower(): f.name for f in fields(ScenarioConfig)}
    out = {}
    for k, v in values.items():
        key = names.get(k.strip().lower().replace("-", "_"))
        if key is None:
            raise ConfigError(f"unknown key {k!r}")
        default = getattr(ScenarioConfig(scenario=cfg.scenario), key)
        try:
            out[key] = _convert(key, default, v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {v!r}") from exc
    return replace(cfg, **out)


def _convert(key, default, v):
    if key == "scenario":
        return Scenario.parse(v)
    if key == "mode":
        try:
            return IntegratorMode.parse(v)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if key == "output_dir":
        return Path(v)
    if isinstance(default, bool):
        if isinstance(v, str):
            if v.strip().lower() in ("1", "true", "yes", "on"):
                return True
            if v.strip().lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(v)
        return bool(v)
    if isinstance(default, tuple):
        if isinstance(v, str):
            return tuple(float(s) for s in v.replace(",", " ").split())
        return tuple(float(s) for s in v)
    if isinstance(default, int):
        f = float(v)
        if f != int(f):
            raise ValueError(v)
        return int(f)
    if isinstance(default, float):
        return float(v)
    return str(v).strip()


def load_config(path: str | Path, **overrides) -> ScenarioConfig:
    """Read an INI file whose single section is named after the scenario.

    Keyword overrides (the CLI flags) win over file values; ``None`` means
    "not given".
    """
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    sections = parser.sections()
    if len(sections) != 1:
        raise ConfigError(f"{path}: expected exactly one scenario section, found {sections}")
    values = dict(parser[sections[0]])
    values.update({k: v for k, v in overrides.items() if v is not None})
    return default_config(sections[0], **values)


def dump_config(cfg: ScenarioConfig) -> str:
    lines = [f"[{cfg.scenario.value}]"]
    for f in fields(ScenarioConfig):
        if f.name == "scenario":
            continue
        v = getattr(cfg, f.name)
        if isinstance(v, IntegratorMode):
            v = mode_label(v)
        elif isinstance(v, tuple):
            v = ", ".join(repr(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


@dataclass
class RunReport:
    scenario: str
    mode: str
    wall_time: float = 0.0
    subiter_hist: Counter = field(default_factory=Counter)
    n_subiters: int = 0
    n_lost: int = 0
    n_wall_stops: int = 0
    n_outlet: int = 0
    files: list[Path] = field(default_factory=list)
    results: dict[str, Any] = field(default_factory=dict)

    def absorb(self, rep: StepReport) -> None:
        self.subiter_hist.update(rep.subiter_hist)
        self.n_subiters += rep.n_subiters_total
        self.n_lost += rep.n_lost
        self.n_wall_stops += rep.n_wall_stops
        self.n_outlet += rep.n_outlet

    def summary(self) -> str:
        lines = [f"scenario {self.scenario} ({self.mode}): {self.wall_time:.1f} s, "
                 f"{self.n_subiters} sub-iterations, lost {self.n_lost}, wall stops {self.n_wall_stops}, "
                 f"outlet {self.n_outlet}"]
        for k, v in self.results.items():
            lines.append(f"  {k}: {v}")
        for p in self.files:
            lines.append(f"  wrote {p}")
        return "\n".join(lines)


def mode_label(mode: IntegratorMode) -> str:
    return {IntegratorMode.CELL_TO_CELL: "cell-to-cell", IntegratorMode.SINGLE_STEP: "single",
            IntegratorMode.ANTICIPATING: "anticipating"}[mode]


def output_steps(n_steps: int) -> list[int]:
    """Steps (1-based) at which statistics are written."""
    stride = 1 if n_steps <= MAX_OUTPUTS else math.ceil(n_steps / MAX_OUTPUTS)
    steps = list(range(stride, n_steps + 1, stride))
    if steps[-1] != n_steps:
        steps.append(n_steps)
    return steps


class _Runner:
    """Steps an ensemble and keeps the report and step log in sync."""

    def __init__(self, cfg: ScenarioConfig, mesh, provider, report: RunReport, seed_offset: int = 0):
        self.cfg = cfg
        self.mesh = mesh
        self.F = provider.arrays(mesh)
        self.report = report
        self.seed = cfg.seed + seed_offset
        self.log: list[str] = []

    def step(self, E: Ensemble, k: int, dt: float | None = None, diagnostics=None) -> StepReport:
        rep = step_ensemble(self.cfg.mode, E, self.mesh, self.F, self.cfg.dt if dt is None else dt, self.seed,
                            k, workers=self.cfg.workers, diagnostics=diagnostics)
        self.report.absorb(rep)
        self.log.append(rep.csv_row())
        if self.cfg.strict and rep.n_lost:
            raise LostParticleError(rep)
        return rep

    def write_log(self, path: Path) -> None:
        path.write_text(StepReport.CSV_HEADER + "\n" + "\n".join(self.log) + "\n")
        self.report.files.append(path)


# ---------------------------------------------------------------------------
# mesh and seeding helpers


def point_source_mesh(cfg: ScenarioConfig):
    """Slab long enough that six standard deviations of the final plume stay
    inside, with ``cells_per_flight`` cells per U_alpha * dt."""
    from .statistics import analytic_moments

    dx = cfg.U_alpha * cfg.dt / cfg.cells_per_flight
    xx, _, _ = analytic_moments(cfg.n_steps * cfg.dt, cfg.U_alpha, cfg.T_L)
    half = max(2, math.ceil(6.0 * math.sqrt(xx) / dx))
    return meshmod.build_cartesian_slab(2 * half + 1, dx, cfg.transverse_extent), half


def annulus_mesh(cfg: ScenarioConfig):
    return meshmod.build_annulus(cfg.n_theta, cfg.n_r, cfg.r_in, cfg.r_out, cfg.depth)


def annulus_cells(mesh, P: np.ndarray) -> np.ndarray:
    """Cell of each point of an annulus mesh, -1 outside.

    Cells are bounded by radial planes and by chords, so the ring follows from
    the projection onto the wedge bisector.
    """
    info = mesh.annulus
    n_t, n_r = info["n_theta"], info["n_r"]
    dth = 2.0 * math.pi / n_t
    P = np.atleast_2d(np.asarray(P, float))
    phi = np.mod(np.arctan2(P[:, 1], P[:, 0]), 2.0 * math.pi)
    j = np.minimum((phi / dth).astype(np.int64), n_t - 1)
    mid = (j + 0.5) * dth
    s = P[:, 0] * np.cos(mid) + P[:, 1] * np.sin(mid)
    levels = np.linspace(info["r_in"], info["r_out"], n_r + 1) * math.cos(0.5 * dth)
    k = np.searchsorted(levels, s, side="right") - 1
    inside = (k >= 0) & (k < n_r) & (P[:, 2] >= 0) & (P[:, 2] <= info["depth"])
    return np.where(inside, k * n_t + j, -1)


def annulus_uniform(mesh, n: int, rng: np.random.Generator) -> np.ndarray:
    """Points uniform in the volume of an annulus mesh (polygonal walls)."""
    info = mesh.annulus
    n_t = info["n_theta"]
    h = math.pi / n_t
    a = info["r_in"] * math.cos(h)
    b = info["r_out"] * math.cos(h)
    j = rng.integers(0, n_t, size=n)
    # in each wedge the width grows linearly with the distance s from the axis
    s = np.sqrt(a * a + rng.uniform(size=n) * (b * b - a * a))
    lateral = (2.0 * rng.uniform(size=n) - 1.0) * s * math.tan(h)
    mid = (2 * j + 1) * h
    P = np.empty((n, 3))
    P[:, 0] = s * np.cos(mid) - lateral * np.sin(mid)
    P[:, 1] = s * np.sin(mid) + lateral * np.cos(mid)
    P[:, 2] = rng.uniform(size=n) * info["depth"]
    return P


def ring_centers(cfg: ScenarioConfig) -> np.ndarray:
    edges = np.linspace(cfg.r_in, cfg.r_out, cfg.n_r + 1)
    return 0.5 * (edges[:-1] + edges[1:])


# ---------------------------------------------------------------------------
# scenarios


def _components(cfg: ScenarioConfig) -> list[int]:
    return [0, 1, 2] if cfg.component == "all" else ["xyz".index(cfg.component)]


def _point_source(cfg: ScenarioConfig, out: Path, report: RunReport) -> None:
    mesh, src = point_source_mesh(cfg)
    report.results["n_cells"] = mesh.n_cells
    provider = hit_provider(cfg.U_alpha, cfg.T_L, cfg.C0)
    x0 = mesh.cell_center[src].copy()
    E = Ensemble.create(np.tile(x0, (cfg.n_particles, 1)), 0.0, src)
    run = _Runner(cfg, mesh, provider, report)
    comps = _components(cfg)
    rows = {k: [] for k in comps}
    dist = []
    excursions = 0
    outs = set(output_steps(cfg.n_steps))
    for k in range(1, cfg.n_steps + 1):
        run.step(E, k - 1)
        if k not in outs:
            continue
        t = k * cfg.dt
        rec = moments(E, x0, t, cfg.T_L)
        for c in comps:
            row = moments_row(rec, rec.n_active, cfg.U_alpha, cfg.T_L, c)
            rows[c].append(row)
        r = rows[comps[0]][-1]
        if any(abs(r[2 + i] - r[5 + i]) > r[8 + i] for i in range(3)):
            excursions += 1
        dist.append(max_dimensionless_distance(E, mesh, t / cfg.T_L))
    for c in comps:
        name = "moments.csv" if c == comps[0] else f"moments_{'xyz'[c]}.csv"
        write_moments_csv(out / name, rows[c])
        report.files.append(out / name)
    write_distance_csv(out / "distance.csv", dist)
    report.files.append(out / "distance.csv")
    run.write_log(out / "steps.csv")

    data = np.array(rows[comps[0]], float)
    report.results["ci_excursions"] = excursions
    report.results["n_outputs"] = len(data)
    report.results["d_star_max"] = max(d.d_star_max for d in dist)
    if cfg.scenario is Scenario.POINT_SOURCE_DIFFUSIVE:
        slope = float(np.polyfit(data[:, 0], data[:, 2], 1)[0])
        report.results["xx_slope"] = slope
        report.results["xx_slope_rel_error"] = slope / (2 * cfg.U_alpha ** 2 * cfg.T_L) - 1.0
        report.results["uu_excursions"] = int(np.count_nonzero(np.abs(data[:, 4] - data[:, 7]) > data[:, 10]))


def _couette_single(cfg: ScenarioConfig, out: Path, report: RunReport) -> None:
    mesh = annulus_mesh(cfg)
    provider = couette_provider(cfg.r_in, cfg.r_out, cfg.omega_in, mesh)
    h = 0.5 * cfg.dtheta
    P = np.array([[r * math.cos(h), r * math.sin(h), 0.5 * cfg.depth] for r in cfg.radii])
    cells = annulus_cells(mesh, P)
    U0 = couette_speed(np.array(cfg.radii), cfg.r_in, cfg.r_out, cfg.omega_in)[:, None] * \
        np.array([-math.sin(h), math.cos(h), 0.0])
    E = Ensemble.create(P, U0, cells)
    run = _Runner(cfg, mesh, provider, report)
    r0 = np.hypot(P[:, 0], P[:, 1])
    rows = [[0, 0.0, 0.0, i, r0[i], r0[i], 0.0] for i in range(len(r0))]
    worst = np.zeros(len(r0))
    for k in range(1, cfg.n_steps + 1):
        run.step(E, k - 1)
        r = np.hypot(E.X[:, 0], E.X[:, 1])
        drift = np.abs(r - r0) / r0
        worst = np.maximum(worst, drift)
        t = k * cfg.dt
        rows.extend([k, t, t * cfg.omega_in / cfg.dtheta, i, r0[i], r[i], drift[i]] for i in range(len(r0)))
    _write_rows(out / "radius.csv", RADIUS_HEADER, rows)
    report.files.append(out / "radius.csv")
    run.write_log(out / "steps.csv")
    report.results["dt_plus"] = cfg.dt_plus
    report.results["final_rel_drift"] = [float(v) for v in drift]
    report.results["max_rel_drift"] = [float(v) for v in worst]


def _seed_annulus(cfg: ScenarioConfig, mesh, seed: int) -> Ensemble:
    rng = np.random.default_rng(seed)
    P = annulus_uniform(mesh, cfg.n_particles, rng)
    cells = annulus_cells(mesh, P)
    if np.any(cells < 0):
        raise RuntimeError("seeded point outside the annulus")
    # laminar flow: particles start with the velocity of their cell
    U = couette_provider(cfg.r_in, cfg.r_out, cfg.omega_in, mesh).arrays(mesh).mean_U[cells]
    return Ensemble.create(P, U, cells)


def _couette_concentration(cfg: ScenarioConfig, out: Path, report: RunReport) -> None:
    mesh = annulus_mesh(cfg)
    provider = couette_provider(cfg.r_in, cfg.r_out, cfg.omega_in, mesh)
    ring = meshmod.annulus_ring_index(mesh)
    expected = ring_expectation(ring, mesh.cell_volume, cfg.n_particles)
    rc = ring_centers(cfg)
    E = _seed_annulus(cfg, mesh, cfg.seed)
    run = _Runner(cfg, mesh, provider, report)
    want = {max(1, round(tp / cfg.dt_plus)): tp for tp in cfg.t_plus_outputs}
    n_steps = max(want)
    profiles = []
    for k in range(1, n_steps + 1):
        run.step(E, k - 1)
        if k in want:
            profiles.append(concentration_radial(E, ring, expected, rc, k * cfg.dt_plus))
    write_concentration_csv(out / "concentration.csv", profiles)
    report.files.append(out / "concentration.csv")
    run.write_log(out / "steps.csv")
    report.results["dt_plus"] = cfg.dt_plus
    report.results["t_plus"] = [p.t_plus for p in profiles]
    report.results["max_abs_error"] = [float(np.max(np.abs(p.c_plus - 1.0))) for p in profiles]
    report.results["outer_c_plus"] = [float(p.c_plus[-1]) for p in profiles]
    report.results["mean_error"] = mean_concentration_error(profiles)


def monte_carlo_floor(expected: np.ndarray) -> float:
    """Mean |c+ - 1| over bins when counts are exact multinomial samples."""
    n = expected.sum()
    p = expected / n
    sd = np.sqrt(n * p * (1 - p)) / expected
    return float(np.mean(math.sqrt(2.0 / math.pi) * sd))


def _couette_convergence(cfg: ScenarioConfig, out: Path, report: RunReport) -> None:
    mesh = annulus_mesh(cfg)
    provider = couette_provider(cfg.r_in, cfg.r_out, cfg.omega_in, mesh)
    ring = meshmod.annulus_ring_index(mesh)
    expected = ring_expectation(ring, mesh.cell_volume, cfg.n_particles)
    rc = ring_centers(cfg)
    floor = monte_carlo_floor(expected)
    start = _seed_annulus(cfg, mesh, cfg.seed)
    rows = []
    profiles = []
    for i, dt in enumerate(cfg.dt_grid):
        # the same initial positions for every time step
        E = start.copy()
        run = _Runner(cfg, mesh, provider, report)
        # nearest whole number of steps to the horizon, at least one
        n = max(1, round(cfg.t_end / dt))
        for k in range(n):
            run.step(E, k, dt=dt)
        prof = concentration_radial(E, ring, expected, rc, n * dt * cfg.omega_in / cfg.dtheta)
        profiles.append(prof)
        err = mean_concentration_error(prof)
        rows.append([dt, dt * cfg.omega_in / cfg.dtheta, n * dt, n, err, floor])
    _write_rows(out / "convergence.csv", CONVERGENCE_HEADER, rows)
    write_concentration_csv(out / "concentration.csv", profiles)
    report.files += [out / "convergence.csv", out / "concentration.csv"]
    report.results["dt"] = [r[0] for r in rows]
    report.results["mean_error"] = [r[4] for r in rows]
    report.results["mc_floor"] = floor


def robustness_mesh(cfg: ScenarioConfig):
    """Mesh and source cell for the robustness scenario."""
    kind = cfg.mesh_kind
    if kind == "slab":
        return point_source_mesh(replace(cfg, cells_per_flight=cfg.cells_per_flight))
    if kind == "annulus":
        m = annulus_mesh(cfg)
        j, k = 0, cfg.n_r // 2
        return m, k * cfg.n_theta + j
    if kind == "tetra-box":
        m = meshmod.build_tetra_box(cfg.n_per_side, cfg.box_length)
    else:
        jit = cfg.jitter if kind == "perturbed-hexa" else 0.0
        m = meshmod.build_box(cfg.n_per_side, cfg.box_length, jitter=jit, seed=cfg.seed)
    mid = np.full(3, 0.5 * cfg.box_length)
    return m, int(np.argmin(((m.cell_center - mid) ** 2).sum(axis=1)))


def _mesh_robustness(cfg: ScenarioConfig, out: Path, report: RunReport) -> None:
    mesh, src = robustness_mesh(cfg)
    rep = meshmod.validate(mesh)
    if not rep.ok:
        raise meshmod.MeshError("mesh validation failed: " + "; ".join(rep.violations[:5]))
    provider = hit_provider(cfg.U_alpha, cfg.T_L, cfg.C0)
    x0 = mesh.cell_center[src].copy()
    E = Ensemble.create(np.tile(x0, (cfg.n_particles, 1)), 0.0, src)
    run = _Runner(cfg, mesh, provider, report)
    outs = set(output_steps(cfg.n_steps))
    dist = [max_dimensionless_distance(E, mesh, 0.0)]
    for k in range(1, cfg.n_steps + 1):
        run.step(E, k - 1)
        if k in outs:
            dist.append(max_dimensionless_distance(E, mesh, k * cfg.dt / cfg.T_L))
    write_distance_csv(out / "distance.csv", dist)
    report.files.append(out / "distance.csv")
    run.write_log(out / "steps.csv")
    report.results["mesh_kind"] = cfg.mesh_kind
    report.results["n_cells"] = mesh.n_cells
    report.results["d_star_max"] = max(d.d_star_max for d in dist)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


_RUNNERS = {
    Scenario.POINT_SOURCE_BALLISTIC: _point_source,
    Scenario.POINT_SOURCE_DIFFUSIVE: _point_source,
    Scenario.COUETTE_SINGLE_PARTICLE: _couette_single,
    Scenario.COUETTE_CONCENTRATION: _couette_concentration,
    Scenario.COUETTE_CONVERGENCE: _couette_convergence,
    Scenario.MESH_ROBUSTNESS: _mesh_robustness,
}


def run_scenario(cfg: ScenarioConfig) -> RunReport:
    """Run one scenario and write its CSVs (and figures) to ``cfg.output_dir``.

    Raises :class:`LostParticleError` in strict mode when a particle is lost.
    """
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(cfg.scenario.value, mode_label(cfg.mode))
    (out / "config.ini").write_text(dump_config(cfg))
    report.files.append(out / "config.ini")
    t0 = time.perf_counter()
    _RUNNERS[cfg.scenario](cfg, out, report)
    report.wall_time = time.perf_counter() - t0
    if cfg.plots:
        from .plotting import render_outputs

        report.files += render_outputs(out)
    return report


__all__ = [
    "Scenario", "ScenarioConfig", "ConfigError", "RunReport", "default_config", "load_config",
    "dump_config", "run_scenario", "output_steps", "annulus_cells", "annulus_uniform", "monte_carlo_floor",
    "default_workers", "DistanceDiagnostic",
]
