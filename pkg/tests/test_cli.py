import pytest

from langevin_c2c import cli
from langevin_c2c.integrator import LostParticleError, StepReport
from langevin_c2c.mesh import read_mesh


def test_simulate_ok(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[point-source-ballistic]\nn_particles = 200\nn_steps = 4\n")
    code = cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--no-plots", "--seed", "3"])
    assert code == cli.EXIT_OK
    assert (tmp_path / "o" / "moments.csv").exists()
    assert "cell-to-cell" in capsys.readouterr().out


def test_simulate_config_error(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[point-source-ballistic]\ndt = 0\n")
    assert cli.main(["simulate", "--config", str(cfg)]) == cli.EXIT_CONFIG
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.ini")]) == cli.EXIT_CONFIG


def test_simulate_lost_particles(tmp_path, monkeypatch):
    def boom(cfg):
        assert cfg.strict
        raise LostParticleError(StepReport(0, 1, 1, 1, 0, 2))

    monkeypatch.setattr("langevin_c2c.scenarios.run_scenario", boom)
    cfg = tmp_path / "c.ini"
    cfg.write_text("[couette-single]\n")
    assert cli.main(["simulate", "--config", str(cfg), "--strict"]) == cli.EXIT_LOST


def test_verify_exit_codes(monkeypatch):
    from langevin_c2c import verify

    monkeypatch.setattr(verify, "CHECKS", {"always fails": lambda: (False, "forced")})
    assert cli.main(["verify"]) == cli.EXIT_VERIFY
    monkeypatch.setattr(verify, "CHECKS", {"fine": lambda: (True, "ok")})
    assert cli.main(["verify"]) == cli.EXIT_OK


@pytest.mark.parametrize("args", [
    ["--kind", "slab", "--n-cells", "7"],
    ["--kind", "box", "--n-per-side", "3"],
    ["--kind", "perturbed-hexa", "--n-per-side", "3", "--walls"],
    ["--kind", "tetra-box", "--n-per-side", "2"],
    ["--kind", "annulus", "--n-theta", "12", "--n-r", "2"],
])
def test_mesh_gen_round_trip(tmp_path, args):
    out = tmp_path / "m.mesh"
    assert cli.main(["mesh-gen", *args, "--out", str(out)]) == cli.EXIT_OK
    assert read_mesh(out).n_cells > 0


def test_mesh_gen_bad_parameters(tmp_path):
    assert cli.main(["mesh-gen", "--kind", "annulus", "--r-in", "3", "--out", str(tmp_path / "m")]) == cli.EXIT_CONFIG


def test_unknown_mode_is_rejected(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[couette-single]\n")
    assert cli.main(["simulate", "--config", str(cfg), "--mode", "bogus"]) == cli.EXIT_CONFIG
