"""Polyhedra, plane cutting, measures and tetrahedral decomposition.

A :class:`Polyhedron` is a vertex table plus outward-oriented face loops
(right-hand rule). Cutting works on any loop keys, which lets the mesh
builders cut in global vertex numbering and share new intersection
vertices between neighbouring cells.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import pdist

from .quadrature import tet_volumes

#: relative snap tolerance for plane/vertex incidence (times h_K)
SNAP = 1e-12


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Plane:
    """The plane ``{x : normal . x = offset}`` with a unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm == 0.0:
            raise GeometryError("plane normal must be nonzero")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "offset", float(self.offset) / norm)

    @classmethod
    def raw(cls, normal, offset):
        """Plane from an already unit normal, stored bit for bit."""
        p = object.__new__(cls)
        object.__setattr__(p, "normal", np.asarray(normal, dtype=float))
        object.__setattr__(p, "offset", float(offset))
        return p

    @classmethod
    def through(cls, point, normal):
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        return cls(n, float(n @ np.asarray(point, dtype=float)))

    def signed_distance(self, x):
        return np.asarray(x, dtype=float) @ self.normal - self.offset

    def project(self, x):
        x = np.asarray(x, dtype=float)
        return x - np.multiply.outer(self.signed_distance(x), self.normal)


@dataclass
class Polyhedron:
    """Vertex coordinates plus outward face loops of local indices.

    ``ids`` optionally carries the global vertex number of each local vertex.
    """

    points: np.ndarray
    faces: list
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.faces = [tuple(int(i) for i in f) for f in self.faces]
        if self.ids is not None:
            self.ids = np.asarray(self.ids, dtype=np.int64)

    @property
    def n_vertices(self):
        return len(self.points)

    @property
    def keys(self):
        """Tie-break keys for deterministic choices (global ids if known)."""
        return self.ids if self.ids is not None else np.arange(self.n_vertices)

    @property
    def h(self):
        return diameter(self.points)

    def edge_counts(self):
        counts = {}
        for f in self.faces:
            for a, b in zip(f, f[1:] + f[:1]):
                key = (a, b) if a < b else (b, a)
                counts[key] = counts.get(key, 0) + 1
        return counts

    def is_closed(self):
        """Every edge shared by exactly two faces, traversed once each way."""
        directed = set()
        for f in self.faces:
            for a, b in zip(f, f[1:] + f[:1]):
                if (a, b) in directed:
                    return False
                directed.add((a, b))
        return all((b, a) in directed for a, b in directed)

    def face_normal(self, k):
        return newell_normal(self.points[list(self.faces[k])])

    def face_planarity(self, k):
        """Max distance of a face's vertices from its best-fit plane."""
        p = self.points[list(self.faces[k])]
        if len(p) == 3:
            return 0.0
        n = newell_normal(p)
        d = (p - p.mean(axis=0)) @ n
        return float(np.abs(d).max())

    def surface_triangles(self):
        """Triangles from fanning each face at its first vertex."""
        tris = [(f[0], f[i], f[i + 1]) for f in self.faces for i in range(1, len(f) - 1)]
        return np.array(tris, dtype=np.int64)

    def volume(self):
        """Volume from the divergence theorem over the fanned faces."""
        t = self.surface_triangles()
        p = self.points - self.points.mean(axis=0)
        a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def surface_area(self):
        t = self.surface_triangles()
        p = self.points
        return float(triangle_areas(p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]).sum())

    def is_convex(self, rtol=1e-10):
        tol = rtol * self.h
        for k, f in enumerate(self.faces):
            n = self.face_normal(k)
            d = n @ self.points[list(f)].mean(axis=0)
            if np.any(self.points @ n - d > tol):
                return False
        return True


def newell_normal(p):
    """Unit normal of a (possibly slightly non-planar) polygon loop."""
    p = np.asarray(p, dtype=float)
    q = np.roll(p, -1, axis=0)
    n = np.array(
        [
            np.sum((p[:, 1] - q[:, 1]) * (p[:, 2] + q[:, 2])),
            np.sum((p[:, 2] - q[:, 2]) * (p[:, 0] + q[:, 0])),
            np.sum((p[:, 0] - q[:, 0]) * (p[:, 1] + q[:, 1])),
        ]
    )
    norm = np.linalg.norm(n)
    if norm == 0.0:
        raise GeometryError("degenerate face")
    return n / norm


def _cross(u, v):
    # componentwise: np.cross carries heavy per-call overhead on small arrays
    return np.stack([u[..., 1] * v[..., 2] - u[..., 2] * v[..., 1],
                     u[..., 2] * v[..., 0] - u[..., 0] * v[..., 2],
                     u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]], axis=-1)


def _norm(u):
    return np.sqrt(np.einsum("...i,...i->...", u, u))


def triangle_areas(a, b, c):
    return 0.5 * _norm(_cross(b - a, c - a))


def triangle_angles(a, b, c):
    """Interior angles (radians) at a, b, c; inputs broadcast over (..., 3).

    Uses atan2(|cross|, dot) so angles near 0 and pi keep full accuracy.
    """

    def ang(u, v):
        return np.arctan2(_norm(_cross(u, v)), np.einsum("...i,...i->...", u, v))

    return np.stack([ang(b - a, c - a), ang(c - b, a - b), ang(a - c, b - c)], axis=-1)


def fan_triangulation(points, loop, keys):
    """Fan a polygon from the apex minimising the largest triangle angle.

    ``points`` is indexable by the entries of ``loop``; ``keys`` gives a
    tie-break value per loop entry. The choice depends only on the vertex
    set and geometry, not on where the loop starts or its orientation, so
    neighbours sharing a face triangulate it identically.

    Returns (list of index triples, max angle).
    """
    loop = list(loop)
    m = len(loop)
    if m == 3:
        p = np.array([points[i] for i in loop])
        ang = triangle_angles(p[0], p[1], p[2])
        if np.min(ang) <= 0.0 or triangle_areas(p[0], p[1], p[2]) == 0.0:
            raise GeometryError("degenerate face")
        return [tuple(loop)], float(ang.max())
    P = np.array([points[i] for i in loop])
    # all fans at once: row s is the fan from apex s
    idx = (np.arange(m)[:, None] + np.arange(m)[None, :]) % m
    a = np.broadcast_to(P[idx[:, :1]], (m, m - 2, 3))
    b, c = P[idx[:, 1:-1]], P[idx[:, 2:]]
    worst = triangle_angles(a, b, c).max(axis=(1, 2))
    valid = np.all(triangle_areas(a, b, c) > 0.0, axis=1)
    best = None
    for s in np.flatnonzero(valid):
        # rounding makes near-ties fall back to the key order
        cand = (round(float(worst[s]), 12), keys[s])
        if best is None or cand < best:
            best, s_best = cand, s
    if best is None:
        raise GeometryError("degenerate face")
    row = idx[s_best]
    return [(loop[row[0]], loop[row[j]], loop[row[j + 1]]) for j in range(1, m - 1)], best[0]


def diameter(points):
    """Largest pairwise distance between points."""
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        raise GeometryError("diameter needs at least two points")
    return float(pdist(points).max())


def box(lo, hi):
    """Axis-aligned box; local vertex ``i + 2j + 4k`` sits at corner (i, j, k)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    corners = np.array([[i, j, k] for k in (0, 1) for j in (0, 1) for i in (0, 1)], dtype=float)
    return Polyhedron(lo + corners * (hi - lo), list(BOX_FACES))


BOX_FACES = (
    (0, 4, 6, 2),  # x = lo
    (1, 3, 7, 5),  # x = hi
    (0, 1, 5, 4),  # y = lo
    (2, 6, 7, 3),  # y = hi
    (0, 2, 3, 1),  # z = lo
    (4, 5, 7, 6),  # z = hi
)


def split_faces(faces, sign, edge_point):
    """Split closed-surface face loops by a vertex sign function.

    ``sign`` maps a loop key to -1, 0 or +1; ``edge_point(a, b)`` returns the
    key of the cut vertex on an edge whose endpoints have strictly opposite
    signs. Returns ``(minus_faces, plus_faces, loop)`` where ``loop`` closes
    the minus piece (oriented outward, towards the plus side). ``loop`` is
    None when one side is empty.
    """
    minus, plus = [], []
    has_minus = any(sign[k] < 0 for f in faces for k in f)
    for f in faces:
        s = [sign[k] for k in f]
        if all(v >= 0 for v in s) and any(v > 0 for v in s):
            plus.append(tuple(f))
            continue
        if all(v <= 0 for v in s) and (any(v < 0 for v in s) or has_minus):
            minus.append(tuple(f))
            continue
        if all(v == 0 for v in s):
            plus.append(tuple(f))
            continue
        nz = [v for v in s if v != 0]
        changes = sum(1 for a, b in zip(nz, nz[1:] + nz[:1]) if a != b)
        if changes != 2:
            raise GeometryError("ambiguous face cut (%d sign changes)" % changes)
        fm, fp = [], []
        m = len(f)
        for i in range(m):
            a, b = f[i], f[(i + 1) % m]
            if sign[a] <= 0:
                fm.append(a)
            if sign[a] >= 0:
                fp.append(a)
            if sign[a] * sign[b] < 0:
                c = edge_point(a, b)
                fm.append(c)
                fp.append(c)
        minus.append(tuple(fm))
        plus.append(tuple(fp))
    if not minus or not plus:
        return minus, plus, None
    directed = set()
    for f in minus:
        directed.update(zip(f, f[1:] + f[:1]))
    nxt = {}
    for a, b in directed:
        if (b, a) not in directed:
            if b in nxt:
                raise GeometryError("non-manifold cut")
            nxt[b] = a
    if len(nxt) < 3:
        raise GeometryError("degenerate cut polygon")
    start = min(nxt)
    loop = [start]
    while True:
        k = nxt[loop[-1]]
        if k == start:
            break
        loop.append(k)
        if len(loop) > len(nxt):
            raise GeometryError("cut polygon does not close")
    if len(loop) != len(nxt):
        raise GeometryError("cut produced several interface loops")
    return minus, plus, tuple(loop)


def _subpolyhedron(points, faces, ids=None):
    used = sorted({k for f in faces for k in f})
    remap = {k: i for i, k in enumerate(used)}
    new_faces = [tuple(remap[k] for k in f) for f in faces]
    sub_ids = None if ids is None else np.asarray(ids)[used]
    return Polyhedron(np.asarray(points)[used], new_faces, sub_ids)


def plane_signs(poly, plane, snap=SNAP):
    d = plane.signed_distance(poly.points)
    tol = snap * poly.h
    s = np.sign(d).astype(int)
    s[np.abs(d) <= tol] = 0
    return s, d


def cut_by_plane(poly, plane, snap=SNAP):
    """Cut a convex polyhedron by a plane.

    Returns ``(minus, plus, loop_points)``. Either piece is None when the
    plane misses the polyhedron; vertices within ``snap * h`` of the plane
    are treated as lying on it.
    """
    s, d = plane_signs(poly, plane, snap)
    if not np.any(s > 0):
        return poly, None, None
    if not np.any(s < 0):
        return None, poly, None
    pts = list(poly.points)
    ids = None if poly.ids is None else list(poly.ids)
    made = {}

    def edge_point(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in made:
            i, j = key
            t = d[i] / (d[i] - d[j])
            pts.append(poly.points[i] + t * (poly.points[j] - poly.points[i]))
            if ids is not None:
                ids.append(-1)
            made[key] = len(pts) - 1
        return made[key]

    fm, fp, loop = split_faces(poly.faces, s, edge_point)
    minus = _subpolyhedron(pts, fm + [loop], ids)
    plus = _subpolyhedron(pts, fp + [loop[::-1]], ids)
    return minus, plus, np.array([pts[k] for k in loop])


def cut_cuboid_by_plane(cuboid, plane):
    """Minus-side and plus-side pieces of a box cut by ``plane``."""
    minus, plus, _ = cut_by_plane(cuboid, plane)
    return minus, plus


def plane_section(poly, plane):
    """Vertices of the polygon ``plane & poly`` (None if they do not cross)."""
    return cut_by_plane(poly, plane)[2]


def fan_tetrahedra(poly, triangles, center=None):
    """Tetrahedra joining ``center`` to each boundary triangle.

    Raises if any tetrahedron has negative volume, i.e. the polyhedron is not
    star-convex with respect to ``center``.
    """
    pts = poly.points
    c = pts.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    t = np.asarray(triangles, dtype=np.int64)
    tets = np.empty((len(t), 4, 3))
    tets[:, 0] = c
    tets[:, 1:] = pts[t]
    vol = tet_volumes(tets)
    if np.any(vol < -SNAP * poly.h**3):
        raise GeometryError("polyhedron is not star-convex about its centroid: requires user-supplied decomposition")
    return tets


def tetrahedralize(poly, tri):
    """Centroid-fan tetrahedra over a boundary triangulation (object or array)."""
    triangles = getattr(tri, "triangles", tri)
    return fan_tetrahedra(poly, triangles)


def _orient(tets):
    tets = np.asarray(tets, dtype=float).reshape(-1, 4, 3)
    vol = tet_volumes(tets)
    flip = vol < 0
    tets[flip] = tets[flip][:, [0, 2, 1, 3]]
    return tets


def clip_tet_by_plane(tet, plane, snap=SNAP):
    """Split one tetrahedron into minus-side and plus-side sub-tetrahedra.

    Returns two arrays of shape (k, 4, 3). Near-zero-volume fragments are
    dropped.
    """
    tet = np.asarray(tet, dtype=float)
    h = diameter(tet)
    d = plane.signed_distance(tet)
    s = np.sign(d).astype(int)
    s[np.abs(d) <= snap * h] = 0
    empty = np.empty((0, 4, 3))
    if not np.any(s > 0):
        return _orient(tet[None]), empty
    if not np.any(s < 0):
        return empty, _orient(tet[None])
    neg, pos, zero = np.flatnonzero(s < 0), np.flatnonzero(s > 0), np.flatnonzero(s == 0)
    # zero vertices join the larger strict side; ties go to plus
    if len(neg) > len(pos):
        neg = np.concatenate([neg, zero])
    else:
        pos = np.concatenate([pos, zero])

    def cross(i, j):
        if s[i] == 0:
            return tet[i]
        if s[j] == 0:
            return tet[j]
        t = d[i] / (d[i] - d[j])
        return tet[i] + t * (tet[j] - tet[i])

    if len(neg) == 1 or len(pos) == 1:
        lone, rest = (neg, pos) if len(neg) == 1 else (pos, neg)
        a = lone[0]
        b, c, e = rest
        pb, pc, pe = cross(a, b), cross(a, c), cross(a, e)
        small = np.array([[tet[a], pb, pc, pe]])
        frustum = _prism(tet[b], tet[c], tet[e], pb, pc, pe)
        pieces = (small, frustum) if len(neg) == 1 else (frustum, small)
    else:
        a, b = neg
        c, e = pos
        pac, pae, pbc, pbe = cross(a, c), cross(a, e), cross(b, c), cross(b, e)
        pieces = (
            _prism(tet[a], pac, pae, tet[b], pbc, pbe),
            _prism(tet[c], pac, pbc, tet[e], pae, pbe),
        )
    out = []
    floor = 1e-14 * h**3
    for p in pieces:
        p = _orient(p)
        out.append(p[np.abs(tet_volumes(p)) > floor])
    return out[0], out[1]


def _prism(a, b, c, a2, b2, c2):
    """Three tetrahedra filling the (possibly degenerate) prism abc-a2b2c2."""
    return np.array([[a, b, c, a2], [b, c, a2, b2], [c, a2, b2, c2]])


def split_triangle_bary(d, tol=0.0):
    """Minus and plus polygons of a triangle in barycentric coordinates.

    ``d`` holds the signed distances of the three corners to a plane; values
    within ``tol`` count as on the plane. Polygon vertices are rows of
    barycentric weights, so thin triangles lose no accuracy.
    """
    d = np.asarray(d, dtype=float)
    s = np.sign(d).astype(int)
    s[np.abs(d) <= tol] = 0
    e = np.eye(3)
    if not np.any(s > 0):
        return [e], []
    if not np.any(s < 0):
        return [], [e]
    fm, fp = [], []
    for i in range(3):
        j = (i + 1) % 3
        if s[i] <= 0:
            fm.append(e[i])
        if s[i] >= 0:
            fp.append(e[i])
        if s[i] * s[j] < 0:
            t = d[i] / (d[i] - d[j])
            q = (1.0 - t) * e[i] + t * e[j]
            fm.append(q)
            fp.append(q)
    return [np.array(fm)], [np.array(fp)]


def clip_triangle_by_plane(tri_pts, plane, h=None, snap=SNAP):
    """Polygons of a triangle on the minus and plus side of ``plane``."""
    p = np.asarray(tri_pts, dtype=float)
    if h is None:
        h = diameter(p)
    minus, plus = split_triangle_bary(plane.signed_distance(p), snap * h)
    return [q @ p for q in minus], [q @ p for q in plus]


def inscribed_ball_radius(poly):
    """Radius of the largest ball inside a convex polyhedron.

    Solves ``max r  s.t.  n_f . x + r <= d_f`` over all face planes.
    """
    if not poly.is_convex():
        raise GeometryError("A3 check supported for convex elements only")
    normals = np.array([poly.face_normal(k) for k in range(len(poly.faces))])
    offsets = np.array([normals[k] @ poly.points[list(f)].mean(axis=0) for k, f in enumerate(poly.faces)])
    A = np.hstack([normals, np.ones((len(normals), 1))])
    res = linprog(
        c=[0.0, 0.0, 0.0, -1.0],
        A_ub=A,
        b_ub=offsets,
        bounds=[(None, None)] * 3 + [(0.0, None)],
        method="highs",
    )
    if not res.success:
        raise GeometryError("inscribed-ball LP failed: %s" % res.message)
    return float(res.x[3])
