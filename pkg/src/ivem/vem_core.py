"""Element operators of the lowest-order (immersed) virtual element method
and their global assembly.

Every element is described by one or two *sides*. A side has a coefficient
beta, a 3x3 matrix P mapping the gradient parameter p to the gradient used
on that side, the sub-tetrahedra it covers, and the boundary pieces it
owns. The affine space has one side with P = I. The IFE space has the minus
side with P = I and the plus side with P = M+. Once the sides are known the
projector, stabilisation and load need no further case distinction.
"""
from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.sparse import coo_matrix

from .boundary_tri import triangulate_faces
from .geometry import (
    GeometryError,
    box,
    SNAP,
    clip_tet_by_plane,
    diameter,
    fan_tetrahedra,
    split_triangle_bary,
)
from .quadrature import box_rule, map_tet_rule, tet_volumes
from .spaces import ife_frame

log = logging.getLogger(__name__)


@dataclass
class Side:
    beta: float
    P: np.ndarray
    tets: np.ndarray


@dataclass
class LocalElement:
    """Geometry of one element prepared for operator assembly."""

    points: np.ndarray
    tri: object
    h: float
    anchor: np.ndarray
    sides: list
    frame: object = None
    # boundary pieces: owning triangle, side index, area, centroid and the
    # centroid's barycentric weights in the owning triangle
    piece_tri: np.ndarray = None
    piece_side: np.ndarray = None
    piece_area: np.ndarray = None
    piece_centroid: np.ndarray = None
    piece_bary: np.ndarray = None

    @property
    def n_dofs(self):
        return len(self.points)

    @property
    def kind(self):
        return "affine" if self.frame is None else "ife"


@dataclass
class LocalOperators:
    projector: np.ndarray
    stiffness: np.ndarray
    stab: np.ndarray
    consistency: np.ndarray
    load: np.ndarray = None
    gram: np.ndarray = None
    gram_cond: float = 1.0


def _bary_area_centroid(poly):
    """Area fraction and centroid weights of a polygon given in barycentric weights."""
    a = poly[0, 1:]
    b, c = poly[1:-1, 1:] - a, poly[2:, 1:] - a
    frac = np.abs(b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    total = frac.sum()
    if total == 0.0:
        return 0.0, poly.mean(axis=0)
    cent = (frac[:, None] * (poly[0] + poly[1:-1] + poly[2:]) / 3.0).sum(axis=0) / total
    return float(total), cent


def prepare_element(poly, beta=1.0, plane=None, beta_minus=None, beta_plus=None, tri=None):
    """Build a :class:`LocalElement` for the affine space (``plane`` None)
    or the IFE space of ``plane`` with coefficients beta-/beta+."""
    if tri is None:
        tri = triangulate_faces(poly)
    pts = poly.points
    h = diameter(pts)
    tets = fan_tetrahedra(poly, tri.triangles)
    ntri = tri.n_T
    if plane is None:
        anchor = pts.mean(axis=0)
        sides = [Side(float(beta), np.eye(3), tets)]
        c = pts[tri.triangles].mean(axis=1)
        bary = np.full((ntri, 3), 1.0 / 3.0)
        return LocalElement(pts, tri, h, anchor, sides, None, np.arange(ntri), np.zeros(ntri, dtype=np.int64), tri.areas.copy(), c, bary)
    anchor = plane.project(pts.mean(axis=0))
    frame = ife_frame(plane, beta_minus, beta_plus, anchor)
    minus, plus = [], []
    for t in tets:
        a, b = clip_tet_by_plane(t, plane)
        minus.append(a)
        plus.append(b)
    sides = [
        Side(float(beta_minus), np.eye(3), np.concatenate(minus) if minus else np.empty((0, 4, 3))),
        Side(float(beta_plus), frame.M_plus, np.concatenate(plus) if plus else np.empty((0, 4, 3))),
    ]
    ptri, pside, parea, pbary = [], [], [], []
    for t, corners in enumerate(tri.triangles):
        m, p = split_triangle_bary(plane.signed_distance(pts[corners]), SNAP * h)
        for s, polys in ((0, m), (1, p)):
            for q in polys:
                frac, bary = _bary_area_centroid(q)
                if frac > 0.0:
                    ptri.append(t)
                    pside.append(s)
                    parea.append(frac * tri.areas[t])
                    pbary.append(bary)
    ptri, pbary = np.array(ptri, dtype=np.int64), np.array(pbary)
    pcent = np.einsum("qi,qid->qd", pbary, pts[tri.triangles[ptri]])
    return LocalElement(pts, tri, h, anchor, sides, frame, ptri, np.array(pside, dtype=np.int64), np.array(parea), pcent, pbary)


def _hat_gradients(el):
    """Surface gradients of the three hats on every boundary triangle, (n_T, 3, 3)."""
    p = el.points[el.tri.triangles]
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    n = np.cross(e[:, 0], e[:, 1])
    two_area = np.linalg.norm(n, axis=1)
    n = n / two_area[:, None]
    return np.cross(n[:, None, :], e) / two_area[:, None, None], n


def gram_matrix(el):
    """G = sum_s beta_s |K_s| P_s^T P_s."""
    G = np.zeros((3, 3))
    for s in el.sides:
        if len(s.tets):
            G += s.beta * np.abs(tet_volumes(s.tets)).sum() * (s.P.T @ s.P)
    return G


def local_projector(el):
    """(4, n) matrix taking boundary DoFs to (c, p): Pi v = c + (P_s p) . (x - x_K).

    The gradient part solves G p = b with b_j the boundary flux moments of
    each hat; the constant matches the boundary mean.
    """
    n = el.n_dofs
    tris = el.tri.triangles
    _, normals = _hat_gradients(el)
    G = gram_matrix(el)
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > 1e14:
        raise GeometryError("degenerate element")
    B = np.zeros((3, n))
    moment = np.zeros(3)
    for q in range(len(el.piece_tri)):
        t, s = el.piece_tri[q], el.sides[el.piece_side[q]]
        lam = el.piece_bary[q] * el.piece_area[q]
        flux = s.beta * (s.P.T @ normals[t])
        np.add.at(B, (slice(None), tris[t]), np.outer(flux, lam))
        moment += el.piece_area[q] * (s.P.T @ (el.piece_centroid[q] - el.anchor))
    Pg = np.linalg.solve(G, B)
    m = np.zeros(n)
    np.add.at(m, tris.ravel(), np.repeat(el.tri.areas / 3.0, 3))
    c = (m - moment @ Pg) / el.tri.areas.sum()
    return np.vstack([c, Pg]), G, float(cond)


def local_stabilization(el, projector):
    """h_K sum over boundary pieces of |grad_F (v - Pi v)|^2, as a matrix."""
    n = el.n_dofs
    Pg = projector[1:]
    grads, normals = _hat_gradients(el)
    S = np.zeros((n, n))
    tris = el.tri.triangles
    for q in range(len(el.piece_tri)):
        t, s = el.piece_tri[q], el.sides[el.piece_side[q]]
        nt = normals[t]
        tang = np.eye(3) - np.outer(nt, nt)
        C = -(tang @ s.P @ Pg)
        C[:, tris[t]] += grads[t].T
        S += el.piece_area[q] * (C.T @ C)
    return el.h * S


def local_stiffness(el):
    """Projector, stabilisation and a_K for one element."""
    proj, G, cond = local_projector(el)
    Pg = proj[1:]
    cons = Pg.T @ G @ Pg
    stab = local_stabilization(el, proj)
    K = cons + stab
    return LocalOperators(proj, 0.5 * (K + K.T), stab, cons, None, G, cond)


def local_load(el, projector, f, degree=2):
    """load_i = int_K f Pi(phi_i) by tet quadrature on each side."""
    Pg = projector[1:]
    F0 = 0.0
    F1 = np.zeros(3)
    for s in el.sides:
        if not len(s.tets):
            continue
        pts, w = map_tet_rule(s.tets, degree)
        x = pts.reshape(-1, 3)
        fw = f(x) * w.ravel()
        F0 += fw.sum()
        F1 += s.P.T @ (fw @ (x - el.anchor))
    return projector[0] * F0 + Pg.T @ F1


def project_values(el, projector, dofs):
    """(c, p) of Pi v for boundary values ``dofs``."""
    coef = projector @ dofs
    return coef[0], coef[1:]


# ----------------------------------------------------------------- reference cube

@dataclass
class ReferenceCube:
    """Operators of the unit cube; congruent cubes of side h reuse them."""

    projector: np.ndarray
    consistency: np.ndarray
    stab: np.ndarray
    tets: np.ndarray
    load_points: np.ndarray = field(default=None)
    load_weights: np.ndarray = field(default=None)

    @classmethod
    def build(cls):
        el = prepare_element(box([0, 0, 0], [1, 1, 1]), beta=1.0)
        ops = local_stiffness(el)
        pts, w = map_tet_rule(el.sides[0].tets, 2)
        return cls(ops.projector, ops.consistency, ops.stab, el.sides[0].tets, pts.reshape(-1, 3), w.ravel())

    def scaled(self, h, beta):
        proj = self.projector.copy()
        proj[1:] /= h
        return proj, h * (beta * self.consistency + self.stab)


_REF = None


def reference_cube():
    global _REF
    if _REF is None:
        _REF = ReferenceCube.build()
    return _REF


# ----------------------------------------------------------------- global system

@dataclass
class GlobalSystem:
    matrix: object
    rhs: np.ndarray
    free: np.ndarray
    values: np.ndarray
    n_total: int
    full_matrix: object = None
    full_load: np.ndarray = None
    local: list = None
    regular: np.ndarray = None
    h_regular: np.ndarray = None
    beta_regular: np.ndarray = None

    @property
    def dof_map(self):
        m = np.full(self.n_total, -1, dtype=np.int64)
        m[self.free] = np.arange(len(self.free))
        return m


def element_beta(element, beta_minus, beta_plus):
    return beta_minus if element.material == "minus" else beta_plus


def prepare_mesh_element(mesh, k, beta_minus, beta_plus):
    e = mesh.elements[k]
    poly = e.polyhedron(mesh.vertices)
    if e.material == "interface":
        return prepare_element(poly, plane=e.plane, beta_minus=beta_minus, beta_plus=beta_plus)
    return prepare_element(poly, beta=element_beta(e, beta_minus, beta_plus))


def _regular_data(mesh, beta_minus, beta_plus):
    reg = np.array([k for k, e in enumerate(mesh.elements) if e.regular], dtype=np.int64)
    ids = np.array([mesh.elements[k].vertex_ids for k in reg], dtype=np.int64).reshape(-1, 8)
    lo = mesh.vertices[ids[:, 0]] if len(reg) else np.zeros((0, 3))
    h = mesh.vertices[ids[:, 7]] - lo if len(reg) else np.zeros((0, 3))
    if len(reg) and not np.allclose(h, h[:, :1], rtol=1e-12, atol=0):
        raise GeometryError("regular elements must be cubes")
    beta = np.array([element_beta(mesh.elements[k], beta_minus, beta_plus) for k in reg])
    return reg, ids, lo, h[:, 0] if len(reg) else np.zeros(0), beta


def regular_loads(ref, lo, h, projector_rows, f):
    """Loads of all regular cubes at once, shape (m, 8)."""
    if not len(lo):
        return np.zeros((0, 8))
    x = lo[:, None, :] + h[:, None, None] * ref.load_points[None]
    w = h[:, None] ** 3 * ref.load_weights[None]
    fw = f(x.reshape(-1, 3)).reshape(x.shape[:2]) * w
    F0 = fw.sum(axis=1)
    xc = lo + 0.5 * h[:, None]
    F1 = np.einsum("mq,mqd->md", fw, x - xc[:, None, :])
    return F0[:, None] * ref.projector[0][None] + (F1 @ ref.projector[1:]) / h[:, None]


def assemble(mesh, beta_minus, beta_plus, f, g):
    """Global stiffness and load with nodal Dirichlet data ``g`` on boundary vertices.

    Fitted meshes use the affine space everywhere; unfitted meshes use the
    IFE space on interface elements.
    """
    nv = mesh.n_vertices
    ref = reference_cube()
    reg, ids, lo, h, beta = _regular_data(mesh, beta_minus, beta_plus)
    rows, cols, vals = [], [], []
    F = np.zeros(nv)
    if len(reg):
        Ks = h[:, None, None] * (beta[:, None, None] * ref.consistency[None] + ref.stab[None])
        rows.append(np.repeat(ids, 8, axis=1).ravel())
        cols.append(np.tile(ids, (1, 8)).ravel())
        vals.append(Ks.ravel())
        np.add.at(F, ids.ravel(), regular_loads(ref, lo, h, ref.projector, f).ravel())
    local = [None] * len(mesh.elements)
    is_reg = np.zeros(len(mesh.elements), dtype=bool)
    is_reg[reg] = True
    worst_cond = 1.0
    for k, e in enumerate(mesh.elements):
        if is_reg[k]:
            continue
        el = prepare_mesh_element(mesh, k, beta_minus, beta_plus)
        ops = local_stiffness(el)
        ops.load = local_load(el, ops.projector, f)
        worst_cond = max(worst_cond, ops.gram_cond)
        local[k] = (el, ops)
        vid = e.vertex_ids
        n = len(vid)
        rows.append(np.repeat(vid, n))
        cols.append(np.tile(vid, n))
        vals.append(ops.stiffness.ravel())
        np.add.at(F, vid, ops.load)
    log.info("largest local Gram condition number %.3e", worst_cond)
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    v = np.concatenate(vals) if vals else np.zeros(0)
    # fixed summation order for reproducible sums
    order = np.lexsort((c, r))
    A = coo_matrix((v[order], (r[order], c[order])), shape=(nv, nv)).tocsr()
    A.sum_duplicates()
    used = np.zeros(nv, dtype=bool)
    used[r] = True
    if not np.all(used):
        raise GeometryError("dangling DoF: vertex %d belongs to no element" % int(np.flatnonzero(~used)[0]))
    values = np.zeros(nv)
    bnd = mesh.boundary
    values[bnd] = g(mesh.vertices[bnd])
    free = np.flatnonzero(~bnd)
    rhs = F[free] - A[free][:, bnd] @ values[bnd]
    Aff = A[free][:, free]
    Aff = (0.5 * (Aff + Aff.T)).tocsr()
    return GlobalSystem(Aff, rhs, free, values, nv, A, F, local, reg, h, beta)
