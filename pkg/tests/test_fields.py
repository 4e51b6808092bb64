import numpy as np
import pytest

from langevin_c2c import fields as F
from langevin_c2c.mesh import build_annulus, build_box


def test_hit_calibration():
    h = F.hit_provider(1.7, 0.4, 2.1)
    c = h.query(0)
    # stationary variance C0 eps T_L / 2 equals U_alpha^2
    assert c.C0 * c.epsilon * c.T_L / 2 == pytest.approx(1.7 ** 2, rel=1e-14)
    assert c.k == pytest.approx(1.5 * 1.7 ** 2, rel=1e-14)
    np.testing.assert_array_equal(c.mean_U, 0.0)
    a = h.arrays(build_box(2))
    assert a.c0eps.shape == (8,)
    np.testing.assert_allclose(a.c0eps, 2 * 1.7 ** 2 / 0.4, rtol=1e-14)


@pytest.mark.parametrize("bad", [dict(U_alpha=0.0), dict(T_L=-1.0), dict(C0=float("nan"))])
def test_hit_rejects_bad_parameters(bad):
    args = dict(U_alpha=1.0, T_L=1.0, C0=2.1) | bad
    with pytest.raises(F.FieldError):
        F.hit_provider(**args)


def test_couette_speed_profile():
    assert F.couette_speed(1.0, 1.0, 2.0, 1.0) == pytest.approx(1.0, rel=1e-15)
    assert F.couette_speed(2.0, 1.0, 2.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    # A r + B / r with A = -1/3, B = 4/3
    r = np.linspace(1, 2, 11)
    np.testing.assert_allclose(F.couette_speed(r, 1.0, 2.0, 1.0), -r / 3 + 4 / (3 * r), rtol=1e-14)


def test_couette_provider_is_azimuthal_and_laminar():
    m = build_annulus(24, 3, 1.0, 2.0, 0.1)
    a = F.couette_provider(1.0, 2.0, 1.0, m).arrays(m)
    xc = m.cell_center
    assert np.max(np.abs(np.sum(a.mean_U[:, :2] * xc[:, :2], axis=1))) < 1e-15
    np.testing.assert_array_equal(a.T_L, 0.0)
    np.testing.assert_array_equal(a.c0eps, 0.0)
    with pytest.raises(F.FieldError):
        F.couette_provider(1.0, 2.0, 1.0, m).arrays(build_box(2))


def test_table_round_trip(tmp_path):
    m = build_annulus(12, 2, 1.0, 2.0, 0.1)
    prov = F.couette_provider(1.0, 2.0, 1.0, m)
    p = tmp_path / "f.csv"
    F.write_table(prov, m, p)
    back = F.read_table(p)
    for c in (0, 5, 23):
        a, b = prov.query(c), back.query(c)
        np.testing.assert_array_equal(a.mean_U, b.mean_U)
        assert a.T_L == b.T_L
    np.testing.assert_array_equal(back.arrays(m).mean_U, prov.arrays(m).mean_U)


def test_table_rejects_bad_files(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(F.FieldError):
        F.read_table(p)
    tab = F.tabulate(F.hit_provider(1.0, 1.0), build_box(2))
    with pytest.raises(F.FieldError):
        tab.arrays(build_box(3))
