"""Face-crossing detection and successive-neighbour particle tracking.

Crossing detection works on the triangular sub-faces of every face. A line
crosses a sub-face when the origin lies on the proper side of the three
projected edges, given by strict sign tests of triple products. The same
canonical vertex order is used from both sides of a face, so a segment that
passes exactly through a shared edge is counted by exactly one sub-face.

All kernels are compiled with numba and take the flat arrays of
:class:`~langevin_c2c.mesh.MeshArrays`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from ._nbutil import borrow
from .mesh import B_INTERIOR, B_OUTLET, B_PERIODIC, B_WALL, BoundaryKind, Mesh, MeshArrays

# cell_transit status codes
STAYED, EXITED, CONTAINMENT_ERROR = 0, 1, 2
# track status codes
TRACK_INSIDE, TRACK_OUTLET, TRACK_WALL, TRACK_LOST, TRACK_CONTAINMENT = 0, 1, 2, 3, 4

# crossings this close to the current point (relative to cell size) are
# classified by orientation instead of by the sign of theta
SNAP_REL = 1e-10
MAX_ZERO_EXITS = 8
# relative shift toward the cell center applied to points stopped on a wall,
# so that rounding cannot leave them outside the cell
WALL_PULLBACK = 1e-8
MIN_TRANSITS = 10_000

_jit = nb.njit(cache=True, nogil=True, error_model="numpy")
_inline = nb.njit(cache=True, nogil=True, error_model="numpy", inline="always")


@_inline
def _triple(ax, ay, az, bx, by, bz, cx, cy, cz):
    # (a ^ b) . c
    return (ay * bz - az * by) * cx + (az * bx - ax * bz) * cy + (ax * by - ay * bx) * cz


@_jit
def edge_test(xa, xb, xo, d):
    """(X_a X_b ^ X_a X_O) . d > 0, strictly."""
    return _triple(xb[0] - xa[0], xb[1] - xa[1], xb[2] - xa[2],
                   xo[0] - xa[0], xo[1] - xa[1], xo[2] - xa[2],
                   d[0], d[1], d[2]) > 0.0


@_jit
def alignment_test(xf, xi, xj, d):
    return _triple(xi[0] - xf[0], xi[1] - xf[1], xi[2] - xf[2],
                   xj[0] - xf[0], xj[1] - xf[1], xj[2] - xf[2],
                   d[0], d[1], d[2]) > 0.0


@_inline
def _side(ux, uy, uz, wx, wy, wz, dx, dy, dz):
    """Sign test (u ^ w) . d > 0 with zeros broken by moving the line origin
    by e1 eps + e2 eps^2 + e3 eps^3, so lines through a vertex still meet
    exactly one triangle of the fan. The tie-break depends only on the edge
    and d, which keeps it reproducible from both adjacent sub-faces."""
    t = _triple(ux, uy, uz, wx, wy, wz, dx, dy, dz)
    if t != 0.0:
        return t > 0.0
    # (u ^ e_k) . d = (d ^ u)_k
    c = dy * uz - dz * uy
    if c != 0.0:
        return c > 0.0
    c = dz * ux - dx * uz
    if c != 0.0:
        return c > 0.0
    return dx * uy - dy * ux > 0.0


@_inline
def _hit(fx, fy, fz, ix, iy, iz, jx, jy, jz, nx, ny, nz, ox, oy, oz, dx, dy, dz):
    """Scalar core of :func:`subface_hit`."""
    dn = nx * dx + ny * dy + nz * dz
    if dn == 0.0:
        return np.nan
    a = dn > 0.0
    # edge (i, j)
    if _side(jx - ix, jy - iy, jz - iz, ox - ix, oy - iy, oz - iz, dx, dy, dz) != a:
        return np.nan
    # edge (f, i)
    if _side(ix - fx, iy - fy, iz - fz, ox - fx, oy - fy, oz - fz, dx, dy, dz) != a:
        return np.nan
    # edge (f, j), reversed sense
    if _side(jx - fx, jy - fy, jz - fz, ox - fx, oy - fy, oz - fz, dx, dy, dz) == a:
        return np.nan
    return ((fx - ox) * nx + (fy - oy) * ny + (fz - oz) * nz) / dn


@_jit
def subface_hit(xf, xi, xj, n, xo, d):
    """Crossing parameter of the line (xo, d) with sub-face (xf, xi, xj) whose
    canonical normal is ``n``; NaN when the line misses it."""
    return _hit(xf[0], xf[1], xf[2], xi[0], xi[1], xi[2], xj[0], xj[1], xj[2],
                n[0], n[1], n[2], xo[0], xo[1], xo[2], d[0], d[1], d[2])


@_inline
def _line_hits_box_f(xo, d, lo, hi, f):
    """Does the infinite line meet box ``f`` of the (n, 3) bound arrays?"""
    tmin = -np.inf
    tmax = np.inf
    for k in range(3):
        l = lo[f, k]
        h = hi[f, k]
        if d[k] == 0.0:
            if xo[k] < l or xo[k] > h:
                return False
        else:
            t1 = (l - xo[k]) / d[k]
            t2 = (h - xo[k]) / d[k]
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
            if tmin > tmax:
                return False
    return True


@_inline
def face_scan(vertices, face_center, sub_ptr, sub_i, sub_j, sub_n, sub_sign,
              f, orient, xo, d, theta0, snap):
    """Crossings of the line with one face, seen from a cell in which the face
    loop normal has sign ``orient``.

    Returns (net, last_exit, n_ahead, n_behind, signed_ahead, signed_behind)
    where ``net`` counts outward minus inward crossings with theta in
    [theta0, 1) and ``last_exit`` is the largest outward theta in that range.
    """
    net = 0
    last_exit = -1.0
    n_ahead = 0
    n_behind = 0
    s_ahead = 0
    s_behind = 0
    fx = face_center[f, 0]
    fy = face_center[f, 1]
    fz = face_center[f, 2]
    ox = xo[0]
    oy = xo[1]
    oz = xo[2]
    dx = d[0]
    dy = d[1]
    dz = d[2]
    for s in range(sub_ptr[f], sub_ptr[f + 1]):
        vi = sub_i[s]
        vj = sub_j[s]
        nx = sub_n[s, 0]
        ny = sub_n[s, 1]
        nz = sub_n[s, 2]
        th = _hit(fx, fy, fz, vertices[vi, 0], vertices[vi, 1], vertices[vi, 2],
                  vertices[vj, 0], vertices[vj, 1], vertices[vj, 2], nx, ny, nz, ox, oy, oz, dx, dy, dz)
        if th != th:
            continue
        dn = nx * dx + ny * dy + nz * dz
        outward = (dn > 0.0) == (orient * sub_sign[s] > 0)
        if abs(th - theta0) * abs(dn) <= snap * math.sqrt(nx * nx + ny * ny + nz * nz):
            ahead = outward
            if outward:
                th = theta0
        else:
            ahead = th > theta0
        sgn = 1 if outward else -1
        if ahead:
            n_ahead += 1
            s_ahead += sgn
            if th < 1.0:
                net += sgn
                if outward and th > last_exit:
                    last_exit = th
        else:
            n_behind += 1
            s_behind += sgn
    return net, last_exit, n_ahead, n_behind, s_ahead, s_behind


@_inline
def transit(M, c, xo, d, theta0):
    """One cell transit of the line ``xo + theta d`` from parameter ``theta0``.

    Every face of the cell whose bounding box meets the infinite line is
    scanned; the signed crossing counts ahead of and behind the current point
    must be +1 and -1 for the point to be inside. Returns (status, face,
    theta, n_in, n_out).
    """
    face_lo = M.face_lo
    face_hi = M.face_hi
    face_center = M.face_center
    sub_ptr = M.sub_ptr
    sub = M.sub_data
    cell_ptr = M.cell_ptr
    cell_faces = M.cell_faces
    cell_fsign = M.cell_fsign
    ox = xo[0]
    oy = xo[1]
    oz = xo[2]
    dx = d[0]
    dy = d[1]
    dz = d[2]
    dlen = np.sqrt(dx * dx + dy * dy + dz * dz)
    if dlen == 0.0:
        return STAYED, -1, 1.0, 0, 0
    # crossings within this distance of the current point's face count as
    # starting on it
    snap = SNAP_REL * M.cell_size[c]
    # 1/0 gives inf, which the slab test below handles through the d == 0 branch
    ix = 1.0 / dx if dx != 0.0 else 0.0
    iy = 1.0 / dy if dy != 0.0 else 0.0
    iz = 1.0 / dz if dz != 0.0 else 0.0
    best_face = -1
    best_theta = np.inf
    n_in = 0
    n_out = 0
    s_ahead = 0
    s_behind = 0
    for k in range(cell_ptr[c], cell_ptr[c + 1]):
        f = cell_faces[k]
        # slab test of the infinite line against the padded face box
        tmin = -np.inf
        tmax = np.inf
        miss = False
        for q in range(3):
            lo = face_lo[f, q]
            hi = face_hi[f, q]
            if q == 0:
                o, dq, iq = ox, dx, ix
            elif q == 1:
                o, dq, iq = oy, dy, iy
            else:
                o, dq, iq = oz, dz, iz
            if dq == 0.0:
                if o < lo or o > hi:
                    miss = True
                    break
            else:
                t1 = (lo - o) * iq
                t2 = (hi - o) * iq
                if t1 > t2:
                    t1, t2 = t2, t1
                if t1 > tmin:
                    tmin = t1
                if t2 < tmax:
                    tmax = t2
                if tmin > tmax:
                    miss = True
                    break
        if miss:
            continue
        orient = cell_fsign[k]
        fx = face_center[f, 0]
        fy = face_center[f, 1]
        fz = face_center[f, 2]
        net = 0
        last_exit = -1.0
        for s in range(sub_ptr[f], sub_ptr[f + 1]):
            nx = sub[s, 6]
            ny = sub[s, 7]
            nz = sub[s, 8]
            th = _hit(fx, fy, fz, sub[s, 0], sub[s, 1], sub[s, 2], sub[s, 3], sub[s, 4], sub[s, 5],
                      nx, ny, nz, ox, oy, oz, dx, dy, dz)
            if th != th:
                continue
            dn = nx * dx + ny * dy + nz * dz
            outward = (dn > 0.0) == (orient * sub[s, 9] > 0.0)
            if abs(th - theta0) * abs(dn) <= snap * math.sqrt(nx * nx + ny * ny + nz * nz):
                ahead = outward
                if outward:
                    th = theta0
            else:
                ahead = th > theta0
            sgn = 1 if outward else -1
            if ahead:
                n_out += 1
                s_ahead += sgn
                if th < 1.0:
                    net += sgn
                    if outward and th > last_exit:
                        last_exit = th
            else:
                n_in += 1
                s_behind += sgn
        if net > 0:
            if last_exit < best_theta or (last_exit == best_theta and f < best_face):
                best_theta = last_exit
                best_face = f
    if s_ahead != 1 or s_behind != -1:
        return CONTAINMENT_ERROR, -1, np.nan, n_in, n_out
    if best_face < 0:
        return STAYED, -1, 1.0, n_in, n_out
    return EXITED, best_face, best_theta, n_in, n_out


_transit = transit


@_inline
def apply_transform(M, f, x, out):
    R = M.brot
    for a in range(3):
        out[a] = R[f, a, 0] * x[0] + R[f, a, 1] * x[1] + R[f, a, 2] * x[2] + M.bshift[f, a]


@_inline
def rotate(M, f, v, out):
    R = M.brot
    for a in range(3):
        out[a] = R[f, a, 0] * v[0] + R[f, a, 1] * v[1] + R[f, a, 2] * v[2]


@_inline
def max_transits(M):
    n = 10 * (M.cell_ptr.shape[0] - 1)
    return n if n > MIN_TRANSITS else MIN_TRANSITS


@_inline
def _lerp(xo, d, theta, out):
    for a in range(3):
        out[a] = xo[a] + theta * d[a]


@_inline
def pull_inside(M, c, x):
    """Move a point lying on a face of ``c`` slightly toward the center."""
    for a in range(3):
        x[a] = x[a] + WALL_PULLBACK * (M.cell_center[c, a] - x[a])


@_jit
def track_kernel(M, cell, xo_in, xd_in, xout, R_acc, ev_face, ev_theta, ev_x, work):
    """Follow the segment ``xo_in -> xd_in`` from ``cell`` across faces.

    Writes the final position into ``xout`` and the accumulated rotation of
    all periodic crossings into ``R_acc`` (identity if none). ``work`` is a
    (4, 3) scratch array. Returns (status, final cell, n_events, n_transits,
    theta_of_stop). Crossing events are stored while the event buffers have
    room.
    """
    xo = work[0]
    xd = work[1]
    d = work[2]
    tmp = work[3]
    for a in range(3):
        xo[a] = xo_in[a]
        xd[a] = xd_in[a]
        d[a] = xd_in[a] - xo_in[a]
    for a in range(3):
        for b in range(3):
            R_acc[a, b] = 1.0 if a == b else 0.0
    theta = 0.0
    n_ev = 0
    zero_run = 0
    cap = max_transits(M)
    count = 0
    while True:
        count += 1
        if count > cap:
            _lerp(xo, d, theta, xout)
            return TRACK_LOST, cell, n_ev, count, theta
        st, f, th, n_in, n_out = transit(M, cell, xo, d, theta)
        if st == CONTAINMENT_ERROR:
            _lerp(xo, d, theta, xout)
            return TRACK_CONTAINMENT, cell, n_ev, count, theta
        if st == STAYED:
            for a in range(3):
                xout[a] = xd[a]
            return TRACK_INSIDE, cell, n_ev, count, 1.0
        if th <= theta:
            zero_run += 1
            if zero_run > MAX_ZERO_EXITS:
                _lerp(xo, d, theta, xout)
                return TRACK_LOST, cell, n_ev, count, theta
        else:
            zero_run = 0
        theta = th
        if n_ev < ev_face.shape[0]:
            ev_face[n_ev] = f
            ev_theta[n_ev] = th
            for a in range(3):
                ev_x[n_ev, a] = xo[a] + th * d[a]
        n_ev += 1
        kind = M.bkind[f]
        if kind == B_INTERIOR:
            fc0 = M.face_cells[f, 0]
            cell = M.face_cells[f, 1] if fc0 == cell else fc0
        elif kind == B_PERIODIC:
            g = M.bpartner[f]
            if g < 0:
                _lerp(xo, d, th, xout)
                return TRACK_LOST, cell, n_ev, count, theta
            # move the whole line into the partner frame; theta is unchanged
            apply_transform(M, f, xo, tmp)
            for a in range(3):
                xo[a] = tmp[a]
            apply_transform(M, f, xd, tmp)
            for a in range(3):
                xd[a] = tmp[a]
            rotate(M, f, d, tmp)
            for a in range(3):
                d[a] = tmp[a]
            for b in range(3):
                c0 = R_acc[0, b]
                c1 = R_acc[1, b]
                c2 = R_acc[2, b]
                for a in range(3):
                    R_acc[a, b] = M.brot[f, a, 0] * c0 + M.brot[f, a, 1] * c1 + M.brot[f, a, 2] * c2
            fc0 = M.face_cells[g, 0]
            cell = fc0 if fc0 >= 0 else M.face_cells[g, 1]
        elif kind == B_OUTLET:
            _lerp(xo, d, th, xout)
            return TRACK_OUTLET, cell, n_ev, count, theta
        else:
            _lerp(xo, d, th, xout)
            pull_inside(M, cell, xout)
            return TRACK_WALL, cell, n_ev, count, theta


# ---------------------------------------------------------------------------
# Python-facing API


def _v(x):
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64).reshape(3))


def edge_side_test(x_alpha, x_beta, x_o, d) -> bool:
    """True iff (X_a X_b ^ X_a X_O) . d > 0 (strict)."""
    return bool(edge_test(_v(x_alpha), _v(x_beta), _v(x_o), _v(d)))


def face_alignment_test(x_f, x_i, x_j, d) -> bool:
    """True iff (X_f X_i ^ X_f X_j) . d > 0 (strict)."""
    return bool(alignment_test(_v(x_f), _v(x_i), _v(x_j), _v(d)))


def subface_crossing(subface, x_o, x_d) -> float | None:
    """Relative time at which the line X_O X_D crosses a triangular sub-face
    ``(X_f, X_i, X_j)``, or None if it misses. Negative values are crossings
    behind the origin."""
    xf, xi, xj = (_v(p) for p in subface)
    xo, xd = _v(x_o), _v(x_d)
    n = np.cross(xi - xf, xj - xf)
    th = subface_hit(xf, xi, xj, n, xo, xd - xo)
    return None if np.isnan(th) else float(th)


@dataclass(frozen=True)
class CrossingEvent:
    face_id: int
    theta: float
    x_i: np.ndarray
    exit: bool = True
    subface_index: int = -1


@dataclass(frozen=True)
class Stayed:
    pass


@dataclass(frozen=True)
class Exited:
    event: CrossingEvent
    neighbor: int | None
    boundary: BoundaryKind | None = None


@dataclass(frozen=True)
class ContainmentError:
    n_in: int
    n_out: int


@dataclass(frozen=True)
class Lost:
    reason: str


TransitOutcome = Stayed | Exited | ContainmentError | Lost


def _orient(mesh: Mesh, cell_id: int, face_id: int) -> int:
    A = mesh.arrays
    s = slice(A.cell_ptr[cell_id], A.cell_ptr[cell_id + 1])
    hit = np.nonzero(A.cell_faces[s] == face_id)[0]
    if hit.size == 0:
        raise ValueError(f"face {face_id} is not a face of cell {cell_id}")
    return int(A.cell_fsign[s][hit[0]])


def face_exit_check(mesh: Mesh, face_id: int, x_o, x_d, cell_id: int | None = None):
    """Crossings of a face by the segment with theta in [0, 1).

    Returns ``(crossed, last_exit_theta)``: ``crossed`` is True when the
    segment leaves through the face an odd number of times net of re-entries,
    and ``last_exit_theta`` is then the largest exit theta. Orientation is
    taken from ``cell_id`` (default: the face owner).
    """
    A = mesh.arrays
    if cell_id is None:
        cell_id = int(A.face_cells[face_id, 0])
    orient = _orient(mesh, cell_id, face_id)
    xo, xd = _v(x_o), _v(x_d)
    d = xd - xo
    dlen = float(np.linalg.norm(d))
    snap = SNAP_REL * A.cell_size[cell_id]
    net, last, *_ = face_scan(A.vertices, A.face_center, A.sub_ptr, A.sub_i, A.sub_j, A.sub_n,
                              A.sub_sign, face_id, orient, xo, d, 0.0, snap)
    if net > 0:
        return True, float(last)
    return False, None


def face_crossings(mesh: Mesh, face_id: int, x_o, x_d) -> list[float]:
    """All sub-face crossing parameters of the infinite line with a face."""
    out = []
    for tri in mesh.subfaces(face_id):
        th = subface_crossing(tri, x_o, x_d)
        if th is not None:
            out.append(th)
    return sorted(out)


def cell_transit(mesh: Mesh, cell_id: int, x_o, x_d) -> TransitOutcome:
    """Decide whether the segment X_O -> X_D leaves ``cell_id`` and where."""
    xo, xd = _v(x_o), _v(x_d)
    if np.array_equal(xo, xd):
        return Stayed()
    st, f, th, n_in, n_out = _transit(mesh.arrays, cell_id, xo, xd - xo, 0.0)
    if st == CONTAINMENT_ERROR:
        return ContainmentError(int(n_in), int(n_out))
    if st == STAYED:
        return Stayed()
    ev = CrossingEvent(int(f), float(th), xo + th * (xd - xo))
    kind = mesh.boundary.get(int(f))
    nb_ = mesh.neighbor(cell_id, int(f))
    return Exited(ev, None if nb_ < 0 else nb_, kind)


@dataclass
class TrackResult:
    status: str  # inside | outlet | wall | lost | containment
    cell: int
    position: np.ndarray
    events: list[CrossingEvent] = field(default_factory=list)
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    @property
    def active(self) -> bool:
        return self.status in ("inside", "wall")


_STATUS = {TRACK_INSIDE: "inside", TRACK_OUTLET: "outlet", TRACK_WALL: "wall",
           TRACK_LOST: "lost", TRACK_CONTAINMENT: "containment"}


def track(mesh: Mesh, cell_id: int, x_o, x_d, max_events: int = 4096) -> TrackResult:
    """Track a free-flight segment cell to cell until it stops.

    Periodic faces move the remaining segment into the partner frame, outlets
    end the track (particle deactivated at the face), walls stop the particle
    at the face.
    """
    xo, xd = _v(x_o), _v(x_d)
    xout = np.empty(3)
    R = np.empty((3, 3))
    ev_face = np.empty(max_events, dtype=np.int64)
    ev_theta = np.empty(max_events)
    ev_x = np.empty((max_events, 3))
    st, cell, n_ev, _, _ = track_kernel(mesh.arrays, int(cell_id), xo, xd, xout, R, ev_face, ev_theta, ev_x,
                                        np.empty((4, 3)))
    n = min(n_ev, max_events)
    events = [CrossingEvent(int(ev_face[k]), float(ev_theta[k]), ev_x[k].copy()) for k in range(n)]
    return TrackResult(_STATUS[int(st)], int(cell), xout, events, R)


@_inline
def borrow_mesh(M):
    """Copy of ``M`` made of untracked views, for use inside hot loops."""
    return MeshArrays(borrow(M.vertices), borrow(M.face_center), borrow(M.face_lo), borrow(M.face_hi),
                      borrow(M.face_cells), borrow(M.sub_ptr), borrow(M.sub_i), borrow(M.sub_j),
                      borrow(M.sub_n), borrow(M.sub_sign), borrow(M.cell_ptr), borrow(M.cell_faces),
                      borrow(M.cell_fsign), borrow(M.cell_center), borrow(M.cell_size), borrow(M.bkind),
                      borrow(M.bpartner), borrow(M.brot), borrow(M.bshift), borrow(M.sub_data))
