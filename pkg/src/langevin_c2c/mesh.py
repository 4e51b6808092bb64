"""Unstructured polyhedral meshes with (possibly warped) polygonal faces.

Faces are stored as ordered vertex loops. Each face is split into triangular
sub-faces ``(X_f, X_i, X_j)`` built on the face center and one edge of the
loop, with the two edge vertices sorted by global index so that a sub-face is
bit-identical whichever incident cell looks at it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree


# ---------------------------------------------------------------------------
# boundary kinds


@dataclass(frozen=True)
class Outlet:
    pass


@dataclass(frozen=True)
class Wall:
    policy: str = "stop"


@dataclass(frozen=True)
class PeriodicTranslation:
    offset: tuple[float, float, float]


@dataclass(frozen=True)
class PeriodicRotation:
    axis: tuple[float, float, float]
    angle: float


BoundaryKind = Outlet | Wall | PeriodicTranslation | PeriodicRotation

# integer codes shared with the compiled kernels
B_INTERIOR, B_OUTLET, B_WALL, B_PERIODIC = 0, 1, 2, 3


def rotation_matrix(axis, angle: float) -> np.ndarray:
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    k = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


@dataclass(frozen=True)
class Face:
    vertex_ids: tuple[int, ...]
    center: np.ndarray
    cells: tuple[int, int]  # (owner, neighbour); neighbour is -1 on boundaries


@dataclass(frozen=True)
class Cell:
    face_ids: tuple[int, ...]
    outward: tuple[int, ...]  # +1 when the face loop normal points out of the cell
    center: np.ndarray
    volume: float


class MeshArrays(NamedTuple):
    """Flat arrays handed to the compiled tracking kernels."""

    vertices: np.ndarray
    face_center: np.ndarray
    face_lo: np.ndarray
    face_hi: np.ndarray
    face_cells: np.ndarray
    sub_ptr: np.ndarray
    sub_i: np.ndarray
    sub_j: np.ndarray
    sub_n: np.ndarray
    sub_sign: np.ndarray
    cell_ptr: np.ndarray
    cell_faces: np.ndarray
    cell_fsign: np.ndarray
    cell_center: np.ndarray
    cell_size: np.ndarray
    bkind: np.ndarray
    bpartner: np.ndarray
    brot: np.ndarray
    bshift: np.ndarray
    # per sub-face: X_i, X_j, canonical normal, loop sign (packed for the kernels)
    sub_data: np.ndarray


class MeshError(ValueError):
    pass


class Mesh:
    """Immutable polyhedral mesh.

    Parameters
    ----------
    vertices : (nv, 3) array
    faces : sequence of vertex loops
    cells : sequence of face-id lists
    boundary : mapping face id -> boundary kind, for every face used by a
        single cell
    """

    def __init__(self, vertices, faces: Sequence[Sequence[int]], cells: Sequence[Sequence[int]],
                 boundary: dict[int, BoundaryKind] | None = None):
        self.vertices = np.ascontiguousarray(np.asarray(vertices, dtype=np.float64).reshape(-1, 3))
        self.vertices.setflags(write=False)
        self.face_loops = [tuple(int(v) for v in f) for f in faces]
        self.cell_face_lists = [tuple(int(f) for f in c) for c in cells]
        self.boundary = dict(boundary or {})

        for fid, loop in enumerate(self.face_loops):
            if len(loop) < 3:
                raise MeshError(f"face {fid} has fewer than 3 vertices")
            for a, b in zip(loop, loop[1:] + loop[:1]):
                if a == b:
                    raise MeshError(f"face {fid} has consecutive duplicate vertex {a}")
        self._build()

    # -- construction -----------------------------------------------------

    def _build(self):
        nf = len(self.face_loops)
        nc = len(self.cell_face_lists)
        X = self.vertices

        lens = np.array([len(f) for f in self.face_loops], dtype=np.int64)
        face_ptr = np.zeros(nf + 1, dtype=np.int64)
        np.cumsum(lens, out=face_ptr[1:])
        flat = np.fromiter((v for f in self.face_loops for v in f), dtype=np.int64, count=int(face_ptr[-1]))
        face_of = np.repeat(np.arange(nf), lens)
        nxt = np.arange(flat.size) + 1
        nxt[face_ptr[1:] - 1] = face_ptr[:-1]
        a, b = flat, flat[nxt]

        fc = np.zeros((nf, 3))
        np.add.at(fc, face_of, X[flat])
        fc /= lens[:, None]

        # sub-faces: one per loop edge, canonical order (X_f, X_min, X_max)
        sub_i = np.minimum(a, b)
        sub_j = np.maximum(a, b)
        sub_sign = np.where(a < b, 1, -1).astype(np.int8)
        xf = fc[face_of]
        sub_n = np.cross(X[sub_i] - xf, X[sub_j] - xf)

        area_vec = np.zeros((nf, 3))
        np.add.at(area_vec, face_of, 0.5 * sub_n * sub_sign[:, None])

        lo = np.full((nf, 3), np.inf)
        hi = np.full((nf, 3), -np.inf)
        np.minimum.at(lo, face_of, X[flat])
        np.maximum.at(hi, face_of, X[flat])
        pad = 1e-9 * (hi - lo).max(axis=1, keepdims=True) + 1e-12 * (1.0 + np.abs(lo).max(axis=1, keepdims=True))
        lo -= pad
        hi += pad

        # cells
        clens = np.array([len(c) for c in self.cell_face_lists], dtype=np.int64)
        if np.any(clens == 0):
            raise MeshError("empty cell")
        cell_ptr = np.zeros(nc + 1, dtype=np.int64)
        np.cumsum(clens, out=cell_ptr[1:])
        cell_faces = np.fromiter((f for c in self.cell_face_lists for f in c), dtype=np.int64,
                                 count=int(cell_ptr[-1]))
        if cell_faces.size and (cell_faces.min() < 0 or cell_faces.max() >= nf):
            raise MeshError("cell references an unknown face")

        cell_of = np.repeat(np.arange(nc), clens)
        # (cell, vertex) incidences, each distinct vertex once per cell
        flens = lens[cell_faces]
        inc_cell = np.repeat(cell_of, flens)
        starts = np.repeat(face_ptr[cell_faces], flens)
        offs = np.arange(flens.sum()) - np.repeat(np.cumsum(flens) - flens, flens)
        inc_vert = flat[starts + offs]
        key = np.unique(inc_cell * np.int64(len(X)) + inc_vert)
        kc = key // len(X)
        kv = key % len(X)
        nvc = np.bincount(kc, minlength=nc)
        centers = np.zeros((nc, 3))
        for q in range(3):
            centers[:, q] = np.bincount(kc, weights=X[kv, q], minlength=nc) / nvc
        sizes = np.zeros(nc)
        np.maximum.at(sizes, kc, np.sqrt(((X[kv] - centers[kc]) ** 2).sum(axis=1)))

        orient = np.einsum("ij,ij->i", area_vec[cell_faces], fc[cell_faces] - centers[cell_of])
        cell_fsign = np.where(orient >= 0.0, 1, -1).astype(np.int8)

        face_cells = np.full((nf, 2), -1, dtype=np.int64)
        self._face_refcount = np.bincount(cell_faces, minlength=nf)
        slot = np.where(cell_fsign > 0, 0, 1)
        pair = cell_faces * 2 + slot
        if np.unique(pair).size == pair.size:
            face_cells[cell_faces, slot] = cell_of
        else:
            # inconsistent orientation; keep what fits so validate() can report it
            for k in range(cell_faces.size):
                f = cell_faces[k]
                sl = slot[k]
                if face_cells[f, sl] >= 0:
                    sl = 1 - sl
                face_cells[f, sl] = cell_of[k]

        # sub-tetrahedra (X_c, X_f, X_i, X_j) oriented outward
        sub_k = np.repeat(np.arange(cell_faces.size), flens)
        sub_idx = starts + offs
        n_out = sub_n[sub_idx] * (sub_sign[sub_idx] * cell_fsign[sub_k])[:, None]
        arm = fc[cell_faces[sub_k]] - centers[inc_cell]
        vol = np.bincount(inc_cell, weights=np.einsum("ij,ij->i", n_out, arm) / 6.0, minlength=nc)

        bkind = np.zeros(nf, dtype=np.int8)
        bpartner = np.full(nf, -1, dtype=np.int64)
        brot = np.tile(np.eye(3), (nf, 1, 1))
        bshift = np.zeros((nf, 3))
        periodic = []
        for f, kind in self.boundary.items():
            if isinstance(kind, Outlet):
                bkind[f] = B_OUTLET
            elif isinstance(kind, Wall):
                bkind[f] = B_WALL
            elif isinstance(kind, PeriodicTranslation):
                bkind[f] = B_PERIODIC
                bshift[f] = kind.offset
                periodic.append(f)
            elif isinstance(kind, PeriodicRotation):
                bkind[f] = B_PERIODIC
                brot[f] = rotation_matrix(kind.axis, kind.angle)
                periodic.append(f)
            else:
                raise MeshError(f"unknown boundary kind {kind!r}")
        if periodic:
            pf = np.array(periodic)
            tree = cKDTree(fc[pf])
            scale = float(np.ptp(X, axis=0).max()) or 1.0
            target = np.einsum("fab,fb->fa", brot[pf], fc[pf]) + bshift[pf]
            dist, idx = tree.query(target)
            hit = dist <= 1e-9 * scale
            bpartner[pf[hit]] = pf[idx[hit]]

        self.face_ptr = face_ptr
        self.face_flat = flat
        self.face_center = fc
        self.face_area_vector = area_vec
        self.cell_center = centers
        self.cell_size = sizes
        self.cell_volume = vol
        self.arrays = MeshArrays(
            vertices=self.vertices, face_center=fc, face_lo=lo, face_hi=hi, face_cells=face_cells,
            sub_ptr=face_ptr, sub_i=sub_i, sub_j=sub_j, sub_n=sub_n, sub_sign=sub_sign,
            cell_ptr=cell_ptr, cell_faces=cell_faces, cell_fsign=cell_fsign, cell_center=centers,
            cell_size=sizes, bkind=bkind, bpartner=bpartner, brot=brot, bshift=bshift,
            sub_data=np.ascontiguousarray(np.hstack([X[sub_i], X[sub_j], sub_n, sub_sign[:, None]])),
        )

    # -- accessors --------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return len(self.face_loops)

    @property
    def n_cells(self) -> int:
        return len(self.cell_face_lists)

    def face(self, fid: int) -> Face:
        fc = self.arrays.face_cells[fid]
        return Face(self.face_loops[fid], self.face_center[fid].copy(), (int(fc[0]), int(fc[1])))

    def cell(self, cid: int) -> Cell:
        s = slice(self.arrays.cell_ptr[cid], self.arrays.cell_ptr[cid + 1])
        return Cell(tuple(int(f) for f in self.arrays.cell_faces[s]),
                    tuple(int(v) for v in self.arrays.cell_fsign[s]),
                    self.cell_center[cid].copy(), float(self.cell_volume[cid]))

    def cell_vertex_ids(self, cid: int) -> np.ndarray:
        fids = self.cell_face_lists[cid]
        return np.unique(np.concatenate([self.face_flat[self.face_ptr[f]:self.face_ptr[f + 1]] for f in fids]))

    def neighbor(self, cid: int, fid: int) -> int:
        a, b = self.arrays.face_cells[fid]
        return int(b if a == cid else a)

    @cached_property
    def cell_radius(self) -> np.ndarray:
        """Largest center-to-vertex distance per cell."""
        return self.cell_size.copy()

    def subfaces(self, fid: int) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Triangles ``(X_f, X_i, X_j)`` of a face, one per loop edge, ``i < j``."""
        s = slice(self.face_ptr[fid], self.face_ptr[fid + 1])
        xf = self.face_center[fid]
        return [(xf.copy(), self.vertices[i].copy(), self.vertices[j].copy())
                for i, j in zip(self.arrays.sub_i[s], self.arrays.sub_j[s])]

    def subface_vertex_ids(self, fid: int) -> list[tuple[int, int]]:
        s = slice(self.face_ptr[fid], self.face_ptr[fid + 1])
        return [(int(i), int(j)) for i, j in zip(self.arrays.sub_i[s], self.arrays.sub_j[s])]

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (np.array_equal(self.vertices, other.vertices)
                and self.face_loops == other.face_loops
                and self.cell_face_lists == other.cell_face_lists
                and self.boundary == other.boundary)

    __hash__ = None

    def __repr__(self):
        return f"Mesh(n_vertices={self.n_vertices}, n_faces={self.n_faces}, n_cells={self.n_cells})"


# ---------------------------------------------------------------------------
# generic assembly


def _hex_face_loops(c: Sequence[int]) -> list[tuple[int, int, int, int]]:
    # corners indexed by bits (a, b, c) -> c[a + 2b + 4c]
    return [
        (c[0], c[4], c[6], c[2]),  # a = 0
        (c[1], c[3], c[7], c[5]),  # a = 1
        (c[0], c[1], c[5], c[4]),  # b = 0
        (c[2], c[6], c[7], c[3]),  # b = 1
        (c[0], c[2], c[3], c[1]),  # c = 0
        (c[4], c[5], c[7], c[6]),  # c = 1
    ]


def _assemble(vertices: np.ndarray, cell_loops: list[list[tuple[int, ...]]], tag) -> Mesh:
    """Deduplicate faces shared by cells and tag the remaining boundary faces.

    ``tag(center, loop)`` returns the BoundaryKind for a boundary face.
    """
    index: dict[tuple[int, ...], int] = {}
    faces: list[tuple[int, ...]] = []
    cells: list[list[int]] = []
    refs: list[int] = []
    for loops in cell_loops:
        ids = []
        for loop in loops:
            key = tuple(sorted(loop))
            fid = index.get(key)
            if fid is None:
                fid = len(faces)
                index[key] = fid
                faces.append(tuple(loop))
                refs.append(0)
            refs[fid] += 1
            ids.append(fid)
        cells.append(ids)
    bids = [fid for fid, n in enumerate(refs) if n == 1]
    boundary = {}
    if bids:
        blens = np.array([len(faces[f]) for f in bids])
        flat = np.fromiter((v for f in bids for v in faces[f]), np.int64, count=int(blens.sum()))
        starts = np.concatenate([[0], np.cumsum(blens)[:-1]])
        centers = np.add.reduceat(np.asarray(vertices)[flat], starts, axis=0) / blens[:, None]
        for fid, center in zip(bids, centers):
            boundary[fid] = tag(center, faces[fid])
    return Mesh(vertices, faces, cells, boundary)


def _box_tagger(lo, hi, periodic: Sequence[bool], outlet_kind=Outlet()):
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    span = hi - lo
    tol = 1e-9 * span.max()

    def tag(center, loop):
        for ax in range(3):
            for side, val in ((-1, lo[ax]), (1, hi[ax])):
                if abs(center[ax] - val) <= tol:
                    if periodic[ax]:
                        off = [0.0, 0.0, 0.0]
                        off[ax] = -side * span[ax]
                        return PeriodicTranslation(tuple(off))
                    return outlet_kind
        raise MeshError(f"boundary face at {center} is not on the box")

    return tag


# ---------------------------------------------------------------------------
# generators


def build_cartesian_slab(n_cells: int, dx: float, transverse_extent: float) -> Mesh:
    """Line of ``n_cells`` hexahedra along x, outlets at both x ends and
    periodic y/z sides."""
    if n_cells < 1:
        raise MeshError("n_cells must be >= 1")
    if not (dx > 0 and transverse_extent > 0):
        raise MeshError("dx and transverse_extent must be positive")
    h = 0.5 * transverse_extent
    xs = dx * np.arange(n_cells + 1)
    ys = np.array([-h, h])
    V = np.array([[x, y, z] for z in ys for y in ys for x in xs])

    def vid(i, j, k):
        return i + (n_cells + 1) * (j + 2 * k)

    loops = []
    for i in range(n_cells):
        corners = [vid(i + a, b, c) for c in (0, 1) for b in (0, 1) for a in (0, 1)]
        loops.append(_hex_face_loops(corners))
    tag = _box_tagger((0.0, -h, -h), (xs[-1], h, h), (False, True, True))
    return _assemble(V, loops, tag)


def build_box(n_per_side: int, length: float = 1.0, jitter: float = 0.0, seed: int = 0,
              periodic: bool = True) -> Mesh:
    """Hexahedral box ``[0, length]^3`` with optional vertex jitter."""
    if n_per_side < 1:
        raise MeshError("n_per_side must be >= 1")
    if not 0.0 <= jitter < 0.5:
        raise MeshError("jitter must lie in [0, 0.5)")
    n = n_per_side
    dx = length / n
    g = np.arange(n + 1) * dx
    Z, Y, Xg = np.meshgrid(g, g, g, indexing="ij")
    V = np.stack([Xg.ravel(), Y.ravel(), Z.ravel()], axis=1)
    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        idx = np.stack(np.meshgrid(np.arange(n + 1), np.arange(n + 1), np.arange(n + 1), indexing="ij"),
                       axis=-1).reshape(-1, 3)
        interior = np.all((idx > 0) & (idx < n), axis=1)
        V[interior] += rng.uniform(-jitter * dx, jitter * dx, size=(int(interior.sum()), 3))

    def vid(i, j, k):
        return i + (n + 1) * (j + (n + 1) * k)

    loops = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                corners = [vid(i + a, j + b, k + c) for c in (0, 1) for b in (0, 1) for a in (0, 1)]
                loops.append(_hex_face_loops(corners))
    tag = _box_tagger((0.0,) * 3, (length,) * 3, (periodic,) * 3)
    return _assemble(V, loops, tag)


def build_perturbed_hexa(n_per_side: int, jitter: float, seed: int, length: float = 1.0,
                         periodic: bool = True) -> Mesh:
    """Cartesian box whose interior vertices are displaced by up to
    ``jitter * dx`` per axis, which warps the faces."""
    return build_box(n_per_side, length=length, jitter=jitter, seed=seed, periodic=periodic)


def build_tetra_box(n_per_side: int, length: float = 1.0, periodic: bool = True) -> Mesh:
    """Box with every cube split into six tetrahedra around its main diagonal."""
    if n_per_side < 1:
        raise MeshError("n_per_side must be >= 1")
    n = n_per_side
    dx = length / n
    g = np.arange(n + 1) * dx
    Z, Y, Xg = np.meshgrid(g, g, g, indexing="ij")
    V = np.stack([Xg.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def vid(i, j, k):
        return i + (n + 1) * (j + (n + 1) * k)

    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    loops = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                for p in perms:
                    pos = [0, 0, 0]
                    tet = [vid(i, j, k)]
                    for ax in p:
                        pos[ax] += 1
                        tet.append(vid(i + pos[0], j + pos[1], k + pos[2]))
                    a, b, c, d = tet
                    loops.append([(a, b, c), (a, b, d), (a, c, d), (b, c, d)])
    tag = _box_tagger((0.0,) * 3, (length,) * 3, (periodic,) * 3)
    return _assemble(V, loops, tag)


def build_annulus(n_theta: int, n_r: int, r_in: float, r_out: float, depth: float) -> Mesh:
    """One-layer annulus of ``n_theta * n_r`` hexahedra with walls on both
    cylinders and periodic z faces. The azimuthal direction closes on shared
    vertices, so there is no seam."""
    if n_theta < 3 or n_r < 1:
        raise MeshError("need n_theta >= 3 and n_r >= 1")
    if not (0.0 < r_in < r_out):
        raise MeshError("need 0 < r_in < r_out")
    if depth <= 0:
        raise MeshError("depth must be positive")
    radii = np.linspace(r_in, r_out, n_r + 1)
    phis = 2.0 * np.pi * np.arange(n_theta) / n_theta
    V = np.array([[r * math.cos(p), r * math.sin(p), z]
                  for z in (0.0, depth) for r in radii for p in phis])

    def vid(j, k, l):
        return (j % n_theta) + n_theta * (k + (n_r + 1) * l)

    loops = []
    for k in range(n_r):
        for j in range(n_theta):
            corners = [vid(j + a, k + b, c) for c in (0, 1) for b in (0, 1) for a in (0, 1)]
            loops.append(_hex_face_loops(corners))
    r_tol = 1e-9 * r_out

    def tag(center, loop):
        z = center[2]
        if abs(z) <= 1e-9 * depth:
            return PeriodicTranslation((0.0, 0.0, depth))
        if abs(z - depth) <= 1e-9 * depth:
            return PeriodicTranslation((0.0, 0.0, -depth))
        rv = np.hypot(V[list(loop), 0], V[list(loop), 1])
        if np.all(np.abs(rv - r_in) <= r_tol) or np.all(np.abs(rv - r_out) <= r_tol):
            return Wall()
        raise MeshError(f"unexpected boundary face at {center}")

    mesh = _assemble(V, loops, tag)
    mesh.annulus = dict(n_theta=n_theta, n_r=n_r, r_in=r_in, r_out=r_out, depth=depth)
    return mesh


def annulus_ring_index(mesh: Mesh) -> np.ndarray:
    """Radial ring of every cell of an annulus mesh (cells are generated
    ring by ring)."""
    info = getattr(mesh, "annulus", None)
    if info is None:
        raise MeshError("not an annulus mesh")
    return np.arange(mesh.n_cells) // info["n_theta"]


# ---------------------------------------------------------------------------
# text format


_KIND_WORDS = {"outlet", "wall", "ptrans", "prot"}


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write("MESH v1\n")
        fh.write(f"VERTICES {mesh.n_vertices}\n")
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")
        fh.write(f"FACES {mesh.n_faces}\n")
        for loop in mesh.face_loops:
            fh.write(f"{len(loop)} " + " ".join(str(int(v)) for v in loop) + "\n")
        fh.write(f"CELLS {mesh.n_cells}\n")
        for fl in mesh.cell_face_lists:
            fh.write(f"{len(fl)} " + " ".join(str(int(v)) for v in fl) + "\n")
        fh.write("BOUNDARY\n")
        for f in sorted(mesh.boundary):
            kind = mesh.boundary[f]
            if isinstance(kind, Outlet):
                fh.write(f"{f} outlet\n")
            elif isinstance(kind, Wall):
                fh.write(f"{f} wall\n")
            elif isinstance(kind, PeriodicTranslation):
                o = kind.offset
                fh.write(f"{f} ptrans {float(o[0])!r} {float(o[1])!r} {float(o[2])!r}\n")
            else:
                a = kind.axis
                fh.write(f"{f} prot {float(a[0])!r} {float(a[1])!r} {float(a[2])!r} {float(kind.angle)!r}\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if not lines or lines[0] != ["MESH", "v1"]:
        raise MeshError("missing 'MESH v1' header")
    pos = 1

    def section(name):
        nonlocal pos
        if pos >= len(lines) or lines[pos][0] != name:
            raise MeshError(f"expected section {name}")
        count = int(lines[pos][1]) if len(lines[pos]) > 1 else None
        pos += 1
        return count

    nv = section("VERTICES")
    verts = np.array([[float(t) for t in lines[pos + i]] for i in range(nv)], dtype=float).reshape(-1, 3)
    pos += nv
    nf = section("FACES")
    faces = []
    for i in range(nf):
        row = lines[pos + i]
        k = int(row[0])
        if len(row) != k + 1:
            raise MeshError(f"face line {i}: expected {k} vertex ids")
        faces.append([int(t) for t in row[1:]])
    pos += nf
    nc = section("CELLS")
    cells = []
    for i in range(nc):
        row = lines[pos + i]
        k = int(row[0])
        if len(row) != k + 1:
            raise MeshError(f"cell line {i}: expected {k} face ids")
        cells.append([int(t) for t in row[1:]])
    pos += nc
    section("BOUNDARY")
    boundary = {}
    for row in lines[pos:]:
        f, word, params = int(row[0]), row[1], [float(t) for t in row[2:]]
        if word not in _KIND_WORDS:
            raise MeshError(f"unknown boundary kind '{word}'")
        if word == "outlet":
            boundary[f] = Outlet()
        elif word == "wall":
            boundary[f] = Wall()
        elif word == "ptrans":
            boundary[f] = PeriodicTranslation(tuple(params[:3]))
        else:
            boundary[f] = PeriodicRotation(tuple(params[:3]), params[3])
    return Mesh(verts, faces, cells, boundary)


# ---------------------------------------------------------------------------
# brute-force containment oracle (Moller-Trumbore ray casting)


_ORACLE_DIRS = (
    np.array([0.5773502691896257, 0.6796996337594446, 0.4524328226137781]),
    np.array([-0.2672612419124244, 0.8017837257372732, -0.5345224838248488]),
    np.array([0.7071067811865476, -0.1414213562373095, 0.6928203230275509]),
)


class ContainmentIndeterminate(RuntimeError):
    pass


def _ray_hits(origin, direction, tri_a, tri_b, tri_c):
    """Line parameters of hits with triangles, or None if a hit is too close
    to an edge or to the origin to be trusted."""
    e1 = tri_b - tri_a
    e2 = tri_c - tri_a
    p = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, p)
    scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    ok = np.abs(det) > 1e-12 * scale
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = origin - tri_a
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    v = (q @ direction) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    eps = 1e-9
    inside = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1 + eps)
    near_edge = ok & inside & ((np.abs(u) <= eps) | (np.abs(v) <= eps) | (np.abs(1 - u - v) <= eps))
    tscale = np.linalg.norm(tri_a - origin, axis=1).max()
    near_origin = inside & (np.abs(t) <= 1e-12 * (1.0 + tscale))
    if near_edge.any() or near_origin.any():
        return None
    return t[inside]


def _cell_triangles(mesh: Mesh, cid: int):
    A = mesh.arrays
    s = slice(A.cell_ptr[cid], A.cell_ptr[cid + 1])
    tri_a, tri_b, tri_c = [], [], []
    for f in A.cell_faces[s]:
        fs = slice(A.sub_ptr[f], A.sub_ptr[f + 1])
        n = fs.stop - fs.start
        tri_a.append(np.repeat(A.face_center[f][None], n, axis=0))
        tri_b.append(A.vertices[A.sub_i[fs]])
        tri_c.append(A.vertices[A.sub_j[fs]])
    return np.concatenate(tri_a), np.concatenate(tri_b), np.concatenate(tri_c)


def contains_point(mesh: Mesh, cell_id: int, point, directions=None) -> bool:
    """Ray-parity containment test over all sub-faces of a cell.

    The line through ``point`` is intersected with every sub-face. The point is
    inside when the line is entered and left the same (non-zero, odd) number of
    times on each side of the point. Raises ContainmentIndeterminate when every
    cast direction grazes an edge.
    """
    P = np.asarray(point, dtype=float)
    tris = _cell_triangles(mesh, cell_id)
    for d in (directions if directions is not None else _ORACLE_DIRS):
        t = _ray_hits(P, np.asarray(d, float), *tris)
        if t is None:
            continue
        n_out = int(np.count_nonzero(t > 0))
        n_in = int(np.count_nonzero(t < 0))
        return n_in % 2 == 1 and n_out % 2 == 1
    raise ContainmentIndeterminate(f"cell {cell_id}: all cast directions degenerate at {P}")


def locate_point(mesh: Mesh, point, candidates=None) -> int:
    """Cell containing ``point`` by brute force (nearest centers first)."""
    P = np.asarray(point, float)
    order = np.argsort(((mesh.cell_center - P) ** 2).sum(axis=1)) if candidates is None else candidates
    for c in order[:64]:
        try:
            if contains_point(mesh, int(c), P):
                return int(c)
        except ContainmentIndeterminate:
            continue
    return -1


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "mesh ok" if self.ok else "\n".join(self.violations)


def max_out_of_plane(mesh: Mesh, fid: int) -> float:
    """Largest distance of a face vertex from the plane through the face
    center with the face's mean normal."""
    n = mesh.face_area_vector[fid]
    n = n / np.linalg.norm(n)
    loop = list(mesh.face_loops[fid])
    return float(np.abs((mesh.vertices[loop] - mesh.face_center[fid]) @ n).max())


def validate(mesh: Mesh, star_samples: int = 0, seed: int = 0) -> ValidationReport:
    """Check the mesh invariants the tracking kernel relies on."""
    rep = ValidationReport()
    A = mesh.arrays
    nf, nc = mesh.n_faces, mesh.n_cells

    for f, loop in enumerate(mesh.face_loops):
        if len(set(loop)) < 3:
            rep.violations.append(f"face {f}: fewer than 3 distinct vertices")

    refs = np.bincount(A.cell_faces, minlength=nf)
    for f in np.nonzero(refs > 2)[0]:
        rep.violations.append(f"face {f}: referenced by {refs[f]} cells")
    for f in np.nonzero(refs == 0)[0]:
        rep.violations.append(f"face {f}: orphan face")
    for f in np.nonzero(refs == 1)[0]:
        if int(f) not in mesh.boundary:
            rep.violations.append(f"face {f}: single-cell face without boundary tag")
    for f in mesh.boundary:
        if refs[f] != 1:
            rep.violations.append(f"face {f}: boundary tag on a face used by {refs[f]} cells")

    # interior faces seen with opposite orientation from their two cells
    sign_sum = np.zeros(nf, dtype=np.int64)
    np.add.at(sign_sum, A.cell_faces, A.cell_fsign.astype(np.int64))
    for f in np.nonzero((refs == 2) & (sign_sum != 0))[0]:
        rep.violations.append(f"face {f}: same orientation in both incident cells")

    # closed surface: every directed edge of outward loops cancels
    for c in range(nc):
        edges: dict[tuple[int, int], int] = {}
        for k in range(A.cell_ptr[c], A.cell_ptr[c + 1]):
            loop = mesh.face_loops[A.cell_faces[k]]
            if A.cell_fsign[k] < 0:
                loop = loop[::-1]
            for a, b in zip(loop, loop[1:] + loop[:1]):
                key = (min(a, b), max(a, b))
                edges[key] = edges.get(key, 0) + (1 if a < b else -1)
        if any(v != 0 for v in edges.values()):
            rep.violations.append(f"cell {c}: non-watertight cell")
            continue
        # star shape around the center: all sub-tetrahedra positively oriented
        xc = A.cell_center[c]
        bad = False
        for k in range(A.cell_ptr[c], A.cell_ptr[c + 1]):
            f = A.cell_faces[k]
            s = slice(A.sub_ptr[f], A.sub_ptr[f + 1])
            n_out = A.sub_n[s] * (A.sub_sign[s] * A.cell_fsign[k])[:, None]
            if np.any(n_out @ (A.face_center[f] - xc) <= 0.0):
                bad = True
                break
        if bad:
            rep.violations.append(f"cell {c}: not star-shaped around its center")

    for f, kind in mesh.boundary.items():
        if isinstance(kind, (PeriodicTranslation, PeriodicRotation)):
            g = A.bpartner[f]
            if g < 0:
                rep.violations.append(f"face {f}: periodic face without a matching partner")
                continue
            mapped = (A.brot[f] @ mesh.vertices[list(mesh.face_loops[f])].T).T + A.bshift[f]
            target = mesh.vertices[list(mesh.face_loops[g])]
            scale = float(np.abs(mesh.vertices).max()) or 1.0
            d = np.sqrt(((mapped[:, None, :] - target[None, :, :]) ** 2).sum(-1)).min(axis=1)
            if d.max() > 1e-12 * scale:
                rep.violations.append(f"face {f}: periodic partner {g} does not match")
            elif A.bpartner[g] != f:
                rep.violations.append(f"face {f}: periodic partner {g} is not reciprocal")

    if star_samples and rep.ok:
        rng = np.random.default_rng(seed)
        for c in range(nc):
            if not _star_sampled(mesh, c, star_samples, rng):
                rep.violations.append(f"cell {c}: sampled point outside cell")
    return rep


def sample_in_cell(mesh: Mesh, cid: int, n: int, rng) -> np.ndarray:
    """Uniform points inside a star-shaped cell, drawn in its sub-tetrahedra
    with probability proportional to their volume."""
    A = mesh.arrays
    xc = A.cell_center[cid]
    tets = []
    vols = []
    for k in range(A.cell_ptr[cid], A.cell_ptr[cid + 1]):
        f = A.cell_faces[k]
        for s in range(A.sub_ptr[f], A.sub_ptr[f + 1]):
            n_out = A.sub_n[s] * A.sub_sign[s] * A.cell_fsign[k]
            tets.append((A.face_center[f], A.vertices[A.sub_i[s]], A.vertices[A.sub_j[s]]))
            vols.append(abs(np.dot(n_out, A.face_center[f] - xc)) / 6.0)
    vols = np.asarray(vols)
    pick = rng.choice(len(tets), size=n, p=vols / vols.sum())
    # uniform barycentric coordinates in a tetrahedron
    b = -np.log(rng.uniform(size=(n, 4)))
    b /= b.sum(axis=1, keepdims=True)
    pts = np.empty((n, 3))
    for m in range(n):
        a1, a2, a3 = tets[pick[m]]
        pts[m] = b[m, 0] * xc + b[m, 1] * a1 + b[m, 2] * a2 + b[m, 3] * a3
    return pts


def _star_sampled(mesh: Mesh, cid: int, n: int, rng) -> bool:
    for p in sample_in_cell(mesh, cid, n, rng):
        try:
            if not contains_point(mesh, cid, p):
                return False
        except ContainmentIndeterminate:
            continue
    return True
