import math

import numpy as np
import pytest

from langevin_c2c import statistics as S
from langevin_c2c.integrator import Ensemble
from langevin_c2c.mesh import build_annulus, build_box, annulus_ring_index


def test_analytic_moments_frozen_values():
    # quadrature oracle values (see test_sde.quad_moments)
    xx, xu, uu = S.analytic_moments(6.0, 1.0, 1.0)
    assert xx == pytest.approx(9.0099088644943121, rel=1e-13)
    assert xu == pytest.approx(0.99504863985902061, rel=1e-13)
    assert uu == pytest.approx(0.99999385578764667, rel=1e-13)
    xx, xu, uu = S.analytic_moments(0.05, 1.0, 1.0)
    assert xx == pytest.approx(8.0279966896463215e-5, rel=1e-12)
    assert S.analytic_moments(0.0, 1.0, 1.0) == (0.0, 0.0, 0.0)


def test_analytic_moments_limits():
    xx, xu, uu = S.analytic_moments(24000.0, 1.0, 1.0)
    assert xx == pytest.approx(2 * (24000 - 1.5), rel=1e-12)
    assert uu == pytest.approx(1.0, rel=1e-12)
    xx, _, _ = S.analytic_moments(1e-4, 2.0, 1.0)
    # ballistic: <X^2> = (2 U^2 / T_L) t^3 / 3 for a release at rest
    assert xx == pytest.approx(8.0 * 1e-12 / 3, rel=1e-3)


def test_ci_envelope_values():
    ci_xx, ci_xu, ci_uu = S.ci_envelope(6.0, 100_000, 1.0, 1.0)
    assert ci_uu == pytest.approx(2.576 * math.sqrt(2 / 1e5), rel=1e-14)
    assert ci_xu == pytest.approx(2.576 * math.sqrt(2 * 7 / 1e5), rel=1e-14)
    assert ci_xx == pytest.approx(2.576 * math.sqrt(2 / 1e5) * 9.0099088644943121, rel=1e-12)


def test_moments_of_known_sample():
    X = np.array([[1.0, 0, 0], [-1.0, 2, 0], [3.0, 0, 1]])
    U = np.array([[1.0, 0, 0], [1.0, 1, 0], [0.0, 0, 2]])
    rec = S.moments((X, U), [1.0, 0, 0], t=2.0, T_L=0.5)
    np.testing.assert_allclose(rec.xx, [8 / 3, 4 / 3, 1 / 3])
    np.testing.assert_allclose(rec.xu, [-2 / 3, 2 / 3, 2 / 3])
    np.testing.assert_allclose(rec.uu, [2 / 3, 1 / 3, 4 / 3])
    assert rec.t_star == 4.0 and rec.n_active == 3


def test_moments_skip_inactive_and_reject_empty():
    E = Ensemble.create(np.zeros((3, 3)), 0.0, 0)
    E.X[2] = 100.0
    E.status[2] = 1
    assert S.moments(E, np.zeros(3)).xx.max() == 0.0
    E.status[:] = 1
    with pytest.raises(S.EmptyEnsembleError):
        S.moments(E, np.zeros(3))


def test_uniform_concentration_is_one():
    m = build_annulus(12, 3, 1.0, 2.0, 0.1)
    ring = annulus_ring_index(m)
    # one particle per unit of volume, placed at cell centers
    counts = np.round(m.cell_volume / m.cell_volume.min() * 10).astype(int)
    cell = np.repeat(np.arange(m.n_cells), counts)
    X = m.cell_center[cell]
    expected = S.ring_expectation(ring, counts.astype(float), len(cell))
    prof = S.concentration_radial((X, np.zeros_like(X), cell), ring, expected)
    np.testing.assert_allclose(prof.c_plus, 1.0)
    assert S.mean_concentration_error(prof) < 1e-15


def test_ring_expectation_is_volume_share():
    ring = np.array([0, 0, 1, 2])
    e = S.ring_expectation(ring, np.array([1.0, 1.0, 2.0, 4.0]), 80)
    np.testing.assert_allclose(e, [20.0, 20.0, 40.0])


def test_dimensionless_distance():
    m = build_box(2)
    c = 3
    vid = m.cell_vertex_ids(c)
    far = m.vertices[vid[np.argmax(np.linalg.norm(m.vertices[vid] - m.cell_center[c], axis=1))]]
    d = S.dimensionless_distance(np.array([far, m.cell_center[c]]), np.array([c, c]), m)
    np.testing.assert_allclose(d, [1.0, 0.0])


def test_csv_round_trip(tmp_path):
    rec = S.moments((np.ones((4, 3)), np.ones((4, 3))), np.zeros(3), t=1.0)
    rows = [S.moments_row(rec, 4, 1.0, 1.0)]
    S.write_moments_csv(tmp_path / "m.csv", rows)
    head = (tmp_path / "m.csv").read_text().splitlines()[0]
    assert head == "t,t_star,xx,xu,uu,xx_exact,xu_exact,uu_exact,ci_xx,ci_xu,ci_uu,n_active"
    back = S.read_csv(tmp_path / "m.csv")
    assert back["xx"][0] == 1.0 and back["n_active"][0] == 4
    S.write_distance_csv(tmp_path / "d.csv", [S.DistanceDiagnostic(0.5, 0.25)])
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "t_star,d_star_max"
    prof = S.ConcentrationProfile(np.array([1.0]), np.array([1.1]), 275.0, np.array([3]))
    S.write_concentration_csv(tmp_path / "c.csv", [prof])
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "t_plus,bin_index,r_center,c_plus"
