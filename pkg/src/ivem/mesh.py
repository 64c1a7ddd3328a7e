"""Cartesian background grids and their fitted / unfitted interface meshes.

Both builders share one cutting pass: the level set is sampled at grid
vertices, every grid edge with strictly opposite signs gets one root
(bisection), and each cut cell is split using those shared roots. Neighbours
therefore see the same intersection vertices, which keeps fitted meshes
conforming and lets unfitted meshes share the extra DoF carriers.
"""
from dataclasses import dataclass, field
import warnings

import numpy as np

from .geometry import (
    BOX_FACES,
    GeometryError,
    Plane,
    Polyhedron,
    diameter,
    fan_triangulation,
    newell_normal,
    plane_section,
    split_faces,
)

#: level-set values below ZERO_TOL * h * |grad phi| count as zero
ZERO_TOL = 1e-12
PLANAR_TOL = 1e-10

_CORNERS = np.array([[i, j, k] for k in (0, 1) for j in (0, 1) for i in (0, 1)])
_CELL_EDGES = ((0, 1), (2, 3), (4, 5), (6, 7), (0, 2), (1, 3), (4, 6), (5, 7), (0, 4), (1, 5), (2, 6), (3, 7))


@dataclass(frozen=True)
class LevelSet:
    """Vectorised level set: ``value(x)`` and ``gradient(x)`` for x of shape (m, 3)."""

    name: str
    value: object
    gradient: object

    def __call__(self, x):
        return self.value(np.atleast_2d(np.asarray(x, dtype=float)))


def squircle(eps=0.1):
    """phi = x1^4 + x2^4 + x3^4 - r0^4 with r0 = 0.75 - eps."""
    r0 = 0.75 - eps

    def value(x):
        return np.sum(x**4, axis=-1) - r0**4

    def gradient(x):
        return 4.0 * x**3

    return LevelSet("squircle", value, gradient)


def sphere(radius=0.6):
    """phi = |x| - radius."""

    def value(x):
        return np.linalg.norm(x, axis=-1) - radius

    def gradient(x):
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(r > 0, x / r, 0.0)

    return LevelSet("sphere", value, gradient)


def plane_levelset(normal=(0.0, 0.0, 1.0), offset=0.5):
    """phi = n . x - offset (n normalised), negative below the plane."""
    p = Plane(normal, offset)

    def value(x):
        return p.signed_distance(x)

    def gradient(x):
        return np.broadcast_to(p.normal, np.shape(x)).copy()

    return LevelSet("plane", value, gradient)


@dataclass
class Element:
    """A polyhedral element.

    ``vertex_ids`` are global vertex numbers; ``faces`` are outward loops of
    local indices into ``vertex_ids``. ``material`` is "minus", "plus" or
    "interface" (the latter carries ``plane``, oriented minus to plus).
    """

    vertex_ids: np.ndarray
    faces: tuple
    material: str
    plane: Plane = None
    cell: int = -1
    regular: bool = False

    def polyhedron(self, vertices):
        return Polyhedron(vertices[self.vertex_ids], list(self.faces), self.vertex_ids)

    def global_faces(self):
        ids = self.vertex_ids
        return [tuple(int(ids[i]) for i in f) for f in self.faces]


@dataclass
class Mesh:
    vertices: np.ndarray
    elements: list
    boundary: np.ndarray
    kind: str
    n: int
    box: tuple
    interface_element_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    #: element id -> points of its interface polygon (Gamma_h restricted to K)
    interface_polygons: dict = field(default_factory=dict)
    levelset: str = ""

    @property
    def h(self):
        lo, hi = self.box
        return float(np.max((np.asarray(hi) - np.asarray(lo)) / self.n))

    @property
    def n_vertices(self):
        return len(self.vertices)

    def element_volumes(self):
        return np.array([e.polyhedron(self.vertices).volume() for e in self.elements])

    def check_conformity(self):
        """Every face is matched by exactly one other face, or lies on the boundary."""
        seen = {}
        for k, e in enumerate(self.elements):
            for f in e.global_faces():
                key = tuple(sorted(f))
                seen.setdefault(key, []).append(k)
        bad = []
        for key, owners in seen.items():
            if len(owners) > 2:
                bad.append((key, owners))
            elif len(owners) == 1 and not np.all(self.boundary[list(key)]):
                bad.append((key, owners))
        if bad:
            raise GeometryError("non-matching faces at elements %s" % sorted({o for _, ow in bad for o in ow})[:20])
        return True


def _grid(n, box):
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    ax = [np.linspace(lo[d], hi[d], n + 1) for d in range(3)]
    Z, Y, X = np.meshgrid(ax[2], ax[1], ax[0], indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    i, j, k = (a.transpose(2, 1, 0).ravel() for a in (i, j, k))
    m = n + 1
    base = i + m * j + m * m * k
    offs = _CORNERS[:, 0] + m * _CORNERS[:, 1] + m * m * _CORNERS[:, 2]
    cells = base[:, None] + offs[None, :]
    return verts, cells


def _boundary_flags(vertices, box, h):
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    tol = 1e-12 * h
    return np.any((np.abs(vertices - lo) <= tol) | (np.abs(vertices - hi) <= tol), axis=1)


def _cube_element(cell_vertex_ids, material, cell):
    return Element(np.asarray(cell_vertex_ids, dtype=np.int64), BOX_FACES, material, None, cell, True)


def cartesian_background(n, box=((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))):
    """N^3 axis-aligned cuboids; cell vertex ``i + 2j + 4k`` is corner (i, j, k)."""
    if int(n) < 1:
        raise ValueError("N must be a positive integer")
    n = int(n)
    verts, cells = _grid(n, box)
    h = float(np.max((np.asarray(box[1]) - np.asarray(box[0])) / n))
    elements = [_cube_element(c, "plus", k) for k, c in enumerate(cells)]
    return Mesh(verts, elements, _boundary_flags(verts, box, h), "fitted", n, tuple(map(tuple, box)))


def _bisect_roots(ls, a, b, fa, tol=1e-14, max_iter=200):
    """Roots of phi on segments [a, b] with fa * phi(b) < 0 (vectorised).

    Bisection until the bracket is shorter than ``tol`` (absolute), then one
    secant step inside the final bracket, which is exact for affine phi.
    """
    a = a.copy()
    b = b.copy()
    fa = fa.copy()
    fb = ls.value(b)
    for _ in range(max_iter):
        if np.all(np.linalg.norm(b - a, axis=1) <= tol):
            break
        m = 0.5 * (a + b)
        fm = ls.value(m)
        left = np.sign(fm) == np.sign(fa)
        a[left], fa[left] = m[left], fm[left]
        right = ~left
        b[right], fb[right] = m[right], fm[right]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(fa != fb, fa / (fa - fb), 0.5)
    t = np.clip(t, 0.0, 1.0)
    return a + t[:, None] * (b - a)


def fit_plane(points, ls, fallback_point=None):
    """Least-squares plane through ``points``, normal oriented along grad phi.

    Falls back to the tangent plane of phi at the projection of
    ``fallback_point`` when the points do not span a plane.
    """
    points = np.asarray(points, dtype=float)
    c = points.mean(axis=0) if len(points) else np.asarray(fallback_point, dtype=float)
    g = ls.gradient(c[None])[0]
    if len(points) >= 3:
        _, s, vt = np.linalg.svd(points - c)
        if s[1] > 1e-10 * max(s[0], 1e-300):
            n = vt[-1]
            if n @ g < 0:
                n = -n
            return Plane.through(c, n)
    # tangent plane at a point on the zero set near c
    x = c if fallback_point is None else np.asarray(fallback_point, dtype=float)
    for _ in range(20):
        gx = ls.gradient(x[None])[0]
        x = x - ls.value(x[None])[0] * gx / (gx @ gx)
    warnings.warn("interface plane fitted from fewer than 3 points; using tangent plane")
    return Plane.through(x, ls.gradient(x[None])[0])


class _Cutter:
    """Shared edge roots and per-cell face splitting for one grid and level set."""

    def __init__(self, background, ls):
        self.bg = background
        self.ls = ls
        verts = background.vertices
        h = background.h
        self.h = h
        phi = ls.value(verts)
        gnorm = np.linalg.norm(ls.gradient(verts), axis=1)
        sign = np.sign(phi).astype(np.int64)
        sign[np.abs(phi) <= ZERO_TOL * h * gnorm] = 0
        self.phi = phi
        self.sign = sign
        cells = np.array([e.vertex_ids for e in background.elements])
        self.cells = cells
        cs = sign[cells]
        self.cut_cells = np.flatnonzero(np.any(cs < 0, axis=1) & np.any(cs > 0, axis=1))
        # crossed grid edges, keyed by sorted global pair
        e = np.array(_CELL_EDGES)
        pairs = cells[self.cut_cells][:, e].reshape(-1, 2)
        pairs = np.sort(pairs, axis=1)
        crossed = sign[pairs[:, 0]] * sign[pairs[:, 1]] < 0
        keys = np.unique(pairs[crossed], axis=0)
        nv = len(verts)
        if len(keys):
            roots = _bisect_roots(ls, verts[keys[:, 0]], verts[keys[:, 1]], phi[keys[:, 0]])
        else:
            roots = np.zeros((0, 3))
        self.edge_id = {(int(a), int(b)): nv + k for k, (a, b) in enumerate(keys)}
        self.vertices = np.vstack([verts, roots])
        self.n_base = nv

    def material(self, cell):
        s = self.sign[self.cells[cell]]
        if np.any(s < 0) and not np.any(s > 0):
            return "minus"
        if np.any(s > 0) and not np.any(s < 0):
            return "plus"
        c = self.vertices[self.cells[cell]].mean(axis=0)
        return "minus" if self.ls.value(c[None])[0] < 0 else "plus"

    def split(self, cell):
        ids = self.cells[cell]
        faces = [tuple(int(ids[i]) for i in f) for f in BOX_FACES]
        sign = {int(g): int(self.sign[g]) for g in ids}

        def edge_point(a, b):
            key = (a, b) if a < b else (b, a)
            return self.edge_id[key]

        fm, fp, loop = split_faces(faces, sign, edge_point)
        return fm, fp, loop


def _make_element(faces, material, plane, cell):
    ids = np.array(sorted({k for f in faces for k in f}), dtype=np.int64)
    local = {int(g): i for i, g in enumerate(ids)}
    loc_faces = tuple(tuple(local[k] for k in f) for f in faces)
    return Element(ids, loc_faces, material, plane, cell, False)


def _triangulate_loop(vertices, loop):
    """Keep a planar loop as one face, otherwise fan it deterministically."""
    pts = vertices[list(loop)]
    h = diameter(pts)
    if len(loop) == 3:
        return [tuple(loop)]
    n = newell_normal(pts)
    dev = np.abs((pts - pts.mean(axis=0)) @ n).max()
    if dev <= PLANAR_TOL * h:
        return [tuple(loop)]
    tris, _ = fan_triangulation(vertices, loop, list(loop))
    return tris


def _finish(cutter, elements, kind, iface, polys):
    verts = cutter.vertices
    bg = cutter.bg
    mesh = Mesh(
        verts,
        elements,
        _boundary_flags(verts, bg.box, bg.h),
        kind,
        bg.n,
        bg.box,
        np.array(iface, dtype=np.int64),
        polys,
        cutter.ls.name,
    )
    return mesh


def build_fitted(background, ls):
    """Replace every cut cell by its two pieces; the pieces meet on the
    polygon through the shared edge roots."""
    cutter = _Cutter(background, ls)
    cut = set(cutter.cut_cells.tolist())
    elements, iface, polys = [], [], {}
    for cell in range(len(cutter.cells)):
        if cell not in cut:
            elements.append(_cube_element(cutter.cells[cell], cutter.material(cell), cell))
            continue
        fm, fp, loop = cutter.split(cell)
        tris = _triangulate_loop(cutter.vertices, loop)
        polys[len(elements)] = cutter.vertices[list(loop)]
        iface.append(len(elements))
        elements.append(_make_element(fm + tris, "minus", None, cell))
        polys[len(elements)] = cutter.vertices[list(loop)]
        iface.append(len(elements))
        elements.append(_make_element(fp + [t[::-1] for t in tris], "plus", None, cell))
    return _finish(cutter, elements, "fitted", iface, polys)


def build_unfitted(background, ls):
    """Keep whole cells; cut cells gain the edge roots as vertices and a
    least-squares interface plane."""
    cutter = _Cutter(background, ls)
    cut = set(cutter.cut_cells.tolist())
    elements, iface, polys = [], [], {}
    for cell in range(len(cutter.cells)):
        if cell not in cut:
            elements.append(_cube_element(cutter.cells[cell], cutter.material(cell), cell))
            continue
        fm, fp, loop = cutter.split(cell)
        pts = cutter.vertices[list(loop)]
        plane = fit_plane(pts, ls, cutter.vertices[cutter.cells[cell]].mean(axis=0))
        el = _make_element(fm + fp, "interface", plane, cell)
        iface.append(len(elements))
        sec = plane_section(el.polyhedron(cutter.vertices), plane)
        polys[len(elements)] = sec if sec is not None else pts
        elements.append(el)
    return _finish(cutter, elements, "unfitted", iface, polys)


def local_interface_plane(cuboid, ls):
    """Interface plane of one cuboid from its own edge roots (None if uncut)."""
    verts = cuboid.points
    h = diameter(verts)
    phi = ls.value(verts)
    gnorm = np.linalg.norm(ls.gradient(verts), axis=1)
    sign = np.sign(phi).astype(np.int64)
    sign[np.abs(phi) <= ZERO_TOL * h * gnorm] = 0
    if not (np.any(sign < 0) and np.any(sign > 0)):
        return None
    edges = cuboid.edge_counts().keys()
    a = np.array([e for e in edges if sign[e[0]] * sign[e[1]] < 0])
    pts = [verts[sign == 0]]
    if len(a):
        pts.append(_bisect_roots(ls, verts[a[:, 0]], verts[a[:, 1]], phi[a[:, 0]]))
    return fit_plane(np.vstack(pts), ls, verts.mean(axis=0))


@dataclass
class DeltaStripReport:
    delta_hat: float
    h: float
    fitted_exponent: float = None
    skipped: int = 0


def _polygon_samples(points, k):
    """Barycentric lattice samples on a fan triangulation of a polygon loop."""
    p = np.asarray(points, dtype=float)
    k = max(int(k), 1)
    ij = [(i, j) for i in range(k + 1) for j in range(k + 1 - i)]
    bary = np.array([[1 - (i + j) / k, i / k, j / k] for i, j in ij])
    out = []
    for t in range(1, len(p) - 1):
        tri = np.array([p[0], p[t], p[t + 1]])
        out.append(bary @ tri)
    return np.vstack(out)


def delta_strip_report(mesh, ls, samples_per_face=6):
    """Largest first-order distance |phi|/|grad phi| from Gamma_h to Gamma."""
    worst, skipped = 0.0, 0
    for pts in mesh.interface_polygons.values():
        if pts is None or len(pts) < 3:
            continue
        x = _polygon_samples(pts, samples_per_face)
        g = np.linalg.norm(ls.gradient(x), axis=1)
        ok = g > 0
        skipped += int(np.count_nonzero(~ok))
        if np.any(ok):
            worst = max(worst, float(np.max(np.abs(ls.value(x[ok])) / g[ok])))
    if skipped:
        warnings.warn("%d delta-strip samples skipped (zero gradient)" % skipped)
    return DeltaStripReport(worst, mesh.h, None, skipped)


def fit_delta_exponent(reports):
    """Least-squares slope of log delta_hat against log h, stored on each report."""
    h = np.array([r.h for r in reports])
    d = np.array([r.delta_hat for r in reports])
    if len(reports) < 2 or np.any(d <= 0):
        raise ValueError("need at least two positive delta_hat values")
    slope = float(np.polyfit(np.log(h), np.log(d), 1)[0])
    for r in reports:
        r.fitted_exponent = slope
    return slope


def min_piece_thickness(mesh):
    """Smallest volume / largest face area over all elements (sliver scan)."""
    best = np.inf
    for e in mesh.elements:
        if e.regular:
            continue
        p = e.polyhedron(mesh.vertices)
        areas = [0.5 * np.linalg.norm(np.cross(p.points[f[1:-1]] - p.points[f[0]], p.points[f[2:]] - p.points[f[0]]), axis=1).sum() for f in map(list, p.faces)]
        best = min(best, p.volume() / max(areas))
    return best


def build_mesh(n, ls, kind):
    bg = cartesian_background(n)
    if kind == "fitted":
        return build_fitted(bg, ls)
    if kind == "unfitted":
        return build_unfitted(bg, ls)
    raise ValueError("kind must be 'fitted' or 'unfitted'")
