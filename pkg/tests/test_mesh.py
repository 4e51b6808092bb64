import numpy as np
import pytest

from langevin_c2c import mesh as M


def test_slab_counts_and_tags():
    m = M.build_cartesian_slab(4, 0.5, 1.0)
    assert m.n_cells == 4
    kinds = [type(k).__name__ for k in m.boundary.values()]
    assert kinds.count("Outlet") == 2
    assert kinds.count("PeriodicTranslation") == 16
    assert M.validate(m, star_samples=10).ok


def test_annulus_counts():
    m = M.build_annulus(360, 21, 1.0, 2.0, 0.05)
    assert m.n_cells == 7560
    ring = M.annulus_ring_index(m)
    assert ring.max() == 20 and np.bincount(ring).tolist() == [360] * 21
    assert M.validate(m).ok


def test_annulus_volume_is_the_polygonal_ring():
    m = M.build_annulus(36, 4, 1.0, 2.0, 0.5)
    # the walls are regular polygons inscribed in the circles
    poly = 0.5 * 36 * np.sin(2 * np.pi / 36) * (2.0 ** 2 - 1.0 ** 2)
    assert m.cell_volume.sum() == pytest.approx(poly * 0.5, rel=1e-12)


@pytest.mark.parametrize("build", [
    lambda: M.build_box(3, 2.0),
    lambda: M.build_perturbed_hexa(4, 0.3, 5, 2.0),
    lambda: M.build_tetra_box(3, 2.0),
])
def test_box_volumes_sum_to_the_box(build):
    m = build()
    assert m.cell_volume.sum() == pytest.approx(8.0, rel=1e-12)
    assert np.all(m.cell_volume > 0)
    assert M.validate(m, star_samples=20, seed=1).ok


def test_perturbed_hexa_faces_are_warped():
    m = M.build_perturbed_hexa(8, 0.3, 1)
    dx = 1.0 / 8
    worst = max(M.max_out_of_plane(m, f) for f in range(m.n_faces))
    assert worst > 0.05 * dx


def test_seed_changes_vertices_not_topology():
    a = M.build_perturbed_hexa(8, 0.3, 1)
    b = M.build_perturbed_hexa(8, 0.3, 2)
    assert not np.array_equal(a.vertices, b.vertices)
    assert a.face_loops == b.face_loops
    assert a.cell_face_lists == b.cell_face_lists


def test_periodic_partners_are_reciprocal():
    m = M.build_box(3)
    A = m.arrays
    for f in m.boundary:
        g = A.bpartner[f]
        assert g >= 0 and A.bpartner[g] == f


@pytest.mark.parametrize("build", [
    lambda: M.build_cartesian_slab(4, 1.0, 1.0),
    lambda: M.build_perturbed_hexa(3, 0.3, 2),
    lambda: M.build_tetra_box(2),
    lambda: M.build_annulus(12, 3, 1.0, 2.0, 0.1),
])
def test_round_trip(tmp_path, build):
    m = build()
    p = tmp_path / "m.mesh"
    M.write_mesh(m, p)
    back = M.read_mesh(p)
    assert back == m
    np.testing.assert_array_equal(back.vertices, m.vertices)


def test_loader_rejects_duplicate_vertices(tmp_path):
    p = tmp_path / "bad.mesh"
    M.write_mesh(M.build_cartesian_slab(1, 1.0, 1.0), p)
    lines = p.read_text().splitlines()
    i = lines.index(next(l for l in lines if l.startswith("FACES"))) + 1
    n, a, b, c, d = lines[i].split()
    lines[i] = f"{n} {a} {a} {c} {d}"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(M.MeshError):
        M.read_mesh(p)


def test_contains_point_agrees_with_box_membership():
    m = M.build_box(3, 3.0)
    rng = np.random.default_rng(0)
    for P in rng.uniform(0, 3, size=(200, 3)):
        c = M.locate_point(m, P)
        expect = int(P[0]) + 3 * (int(P[1]) + 3 * int(P[2]))
        assert c == expect


def test_sample_in_cell_stays_inside():
    m = M.build_perturbed_hexa(3, 0.3, 4)
    rng = np.random.default_rng(1)
    for c in (0, 13, 26):
        for p in M.sample_in_cell(m, c, 30, rng):
            assert M.contains_point(m, c, p)


def test_cell_radius_is_farthest_vertex():
    m = M.build_tetra_box(2)
    for c in (0, 7, 40):
        d = np.linalg.norm(m.vertices[m.cell_vertex_ids(c)] - m.cell_center[c], axis=1).max()
        assert m.cell_radius[c] == pytest.approx(d, rel=1e-15)


def test_bad_parameters():
    with pytest.raises(M.MeshError):
        M.build_box(0)
    with pytest.raises(M.MeshError):
        M.build_box(2, jitter=0.6)
    with pytest.raises(M.MeshError):
        M.build_annulus(2, 1, 1.0, 2.0, 1.0)
    with pytest.raises(M.MeshError):
        M.build_annulus(10, 1, 2.0, 1.0, 1.0)
