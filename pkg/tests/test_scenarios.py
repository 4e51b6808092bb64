import math

import numpy as np
import pytest

from langevin_c2c.integrator import IntegratorMode
from langevin_c2c.mesh import build_annulus, contains_point
from langevin_c2c.scenarios import (
    ConfigError, Scenario, annulus_cells, annulus_uniform, default_config, dump_config, load_config,
    monte_carlo_floor, output_steps, run_scenario,
)
from langevin_c2c.statistics import read_csv


def test_defaults_per_scenario():
    c = default_config("couette-concentration")
    assert c.dt_plus == pytest.approx(5.5)
    assert c.n_particles == 200_000
    d = default_config("point-source-diffusive")
    assert (d.dt, d.cells_per_flight) == (200.0, 20.0)
    g = default_config("couette-convergence").dt_grid
    assert g[0] == pytest.approx(0.05) and g[-1] == pytest.approx(200.0)


def test_load_config_with_overrides(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[point-source-ballistic]\nU_alpha = 2.5\nn_particles = 10\nradii = 1.1, 1.2\n")
    c = load_config(p, mode="single", seed=None)
    assert c.scenario is Scenario.POINT_SOURCE_BALLISTIC
    assert c.U_alpha == 2.5 and c.n_particles == 10
    assert c.mode is IntegratorMode.SINGLE_STEP
    assert c.seed == 1
    assert c.radii == (1.1, 1.2)


def test_dump_and_reload_round_trip(tmp_path):
    c = default_config("couette-single", radii=(1.2,), seed=9)
    p = tmp_path / "c.ini"
    p.write_text(dump_config(c))
    assert load_config(p) == c


@pytest.mark.parametrize("text", [
    "",
    "[a]\n[b]\n",
    "[no-such-scenario]\n",
    "[point-source-ballistic]\nnot_a_key = 1\n",
    "[point-source-ballistic]\ndt = fast\n",
    "[point-source-ballistic]\ndt = -1\n",
    "[couette-single]\nradii = 0.5\n",
    "[mesh-robustness]\nmesh_kind = sphere\n",
])
def test_bad_configs(tmp_path, text):
    p = tmp_path / "bad.ini"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p).validate()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_output_steps():
    assert output_steps(120) == list(range(1, 121))
    s = output_steps(1000)
    assert s[0] == 5 and s[-1] == 1000 and len(s) == 200
    s = output_steps(401)
    assert s[-1] == 401 and s[-2] == 399 and len(s) == 134


def test_annulus_cells_agree_with_containment():
    m = build_annulus(24, 3, 1.0, 2.0, 0.1)
    P = annulus_uniform(m, 400, np.random.default_rng(1))
    cells = annulus_cells(m, P)
    assert np.all(cells >= 0)
    for p, c in zip(P, cells):
        assert contains_point(m, int(c), p)
    assert annulus_cells(m, [[0.0, 0.0, 0.05], [3.0, 0.0, 0.05], [1.5, 0.0, 0.5]]).tolist() == [-1, -1, -1]


def test_annulus_uniform_fills_cells_by_volume():
    m = build_annulus(12, 4, 1.0, 2.0, 0.1)
    n = 200_000
    counts = np.bincount(annulus_cells(m, annulus_uniform(m, n, np.random.default_rng(2))), minlength=m.n_cells)
    expected = n * m.cell_volume / m.cell_volume.sum()
    z = (counts - expected) / np.sqrt(expected)
    assert np.abs(z).max() < 4.5


def test_monte_carlo_floor_matches_sampling():
    expected = np.full(21, 200_000 / 21)
    rng = np.random.default_rng(3)
    errs = [np.mean(np.abs(rng.multinomial(200_000, np.full(21, 1 / 21)) / expected - 1)) for _ in range(400)]
    assert monte_carlo_floor(expected) == pytest.approx(np.mean(errs), rel=0.05)
    # the multinomial floor for the Couette setup
    assert monte_carlo_floor(expected) == pytest.approx(math.sqrt(2 / math.pi) * math.sqrt(20 / 200_000), rel=1e-3)


def _small(scenario, tmp_path, **kw):
    return default_config(scenario, output_dir=tmp_path, plots=False, **kw)


def test_ballistic_run_writes_moments(tmp_path):
    rep = run_scenario(_small("point-source-ballistic", tmp_path, n_particles=500, n_steps=8))
    d = read_csv(tmp_path / "moments.csv")
    assert len(d["t"]) == 8
    assert d["t"][-1] == pytest.approx(0.4)
    assert rep.n_lost == 0
    assert rep.results["d_star_max"] <= 1.0
    assert (tmp_path / "distance.csv").exists() and (tmp_path / "config.ini").exists()
    assert "ci_excursions" in rep.results
    assert sum(rep.subiter_hist.values()) == 500 * 8


def test_runs_are_bitwise_reproducible(tmp_path):
    for sub in ("a", "b"):
        run_scenario(_small("point-source-ballistic", tmp_path / sub, n_particles=300, n_steps=5, seed=4))
    assert (tmp_path / "a" / "moments.csv").read_bytes() == (tmp_path / "b" / "moments.csv").read_bytes()


def test_diffusive_run_reports_slope(tmp_path):
    rep = run_scenario(_small("point-source-diffusive", tmp_path, n_particles=300, n_steps=6))
    assert "xx_slope_rel_error" in rep.results


def test_couette_single_small(tmp_path):
    rep = run_scenario(_small("couette-single", tmp_path, n_steps=30, n_theta=72, n_r=5))
    d = read_csv(tmp_path / "radius.csv")
    assert set(np.unique(d["particle"])) == {0, 1}
    assert max(rep.results["max_rel_drift"]) < 5e-3


def test_couette_concentration_small(tmp_path):
    cfg = _small("couette-concentration", tmp_path, n_particles=2000, n_theta=36, n_r=4,
                 t_plus_outputs=(5.0, 20.0))
    rep = run_scenario(cfg)
    d = read_csv(tmp_path / "concentration.csv")
    assert len(d["c_plus"]) == 2 * 4
    assert len(rep.results["max_abs_error"]) == 2
    assert max(rep.results["max_abs_error"]) < 5 * math.sqrt(4 / 2000)


def test_couette_convergence_small(tmp_path):
    cfg = _small("couette-convergence", tmp_path, n_particles=1000, n_theta=36, n_r=4,
                 dt_grid=(0.5, 2.0), t_end=4.0)
    run_scenario(cfg)
    d = read_csv(tmp_path / "convergence.csv")
    assert d["n_steps"].tolist() == [8, 2]
    assert np.all(d["t_final"] == 4.0)


@pytest.mark.parametrize("kind", ["slab", "box", "perturbed-hexa", "tetra-box", "annulus"])
def test_mesh_robustness_small(tmp_path, kind):
    cfg = _small("mesh-robustness", tmp_path, mesh_kind=kind, n_particles=200, n_steps=10, n_per_side=4,
                 n_theta=24, n_r=3)
    rep = run_scenario(cfg)
    assert rep.n_lost == 0
    assert rep.results["d_star_max"] <= 1.0


def test_plots_are_rendered(tmp_path):
    rep = run_scenario(default_config("point-source-ballistic", output_dir=tmp_path, n_particles=100, n_steps=3))
    pngs = {p.name for p in rep.files if p.suffix == ".png"}
    assert pngs == {"moments.png", "distance.png"}
    assert (tmp_path / "moments.png").stat().st_size > 1000
