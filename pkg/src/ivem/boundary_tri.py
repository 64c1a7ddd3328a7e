"""Boundary triangulations of polyhedral elements and their shape checks.

Each polygonal face is fanned from the apex that minimises the largest
angle. On top of the triangulation we provide the path check (every vertex
reachable from the largest triangle through edges with controlled opposite
angles), its local sufficient condition, and an eigenvalue probe of the
discrete Poincare inequality on the boundary.
"""
from collections import deque
from dataclasses import dataclass
import warnings

import numpy as np
from scipy.linalg import eigh
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .geometry import GeometryError, diameter, fan_triangulation, triangle_angles, triangle_areas


@dataclass
class BoundaryTriangulation:
    """Triangles over the element's local vertices.

    ``triangles`` index ``points`` (local vertex numbers); ``face_ids`` gives
    the polygon each triangle came from; ``angles`` is (n_T, 3), the angle
    at each corner in radians.
    """

    points: np.ndarray
    triangles: np.ndarray
    face_ids: np.ndarray
    angles: np.ndarray
    areas: np.ndarray

    @property
    def n_T(self):
        return len(self.triangles)

    @property
    def theta_M(self):
        return float(self.angles.max())

    @property
    def theta_m_per_triangle(self):
        return self.angles.min(axis=1)

    @property
    def h(self):
        return diameter(self.points)

    def edges(self):
        """Map sorted edge -> list of (triangle, opposite corner)."""
        out = {}
        for t, tri in enumerate(self.triangles):
            for c in range(3):
                a, b = int(tri[(c + 1) % 3]), int(tri[(c + 2) % 3])
                out.setdefault((min(a, b), max(a, b)), []).append((t, c))
        return out

    def normals(self):
        p = self.points[self.triangles]
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)


def triangulate_faces(poly):
    """Fan every face of ``poly`` from its best apex (ties by vertex key)."""
    keys = poly.keys
    tris, fids = [], []
    for k, f in enumerate(poly.faces):
        fan, _ = fan_triangulation(poly.points, f, [int(keys[i]) for i in f])
        tris.extend(fan)
        fids.extend([k] * len(fan))
    tris = np.array(tris, dtype=np.int64)
    p = poly.points[tris]
    angles = triangle_angles(p[:, 0], p[:, 1], p[:, 2])
    areas = triangle_areas(p[:, 0], p[:, 1], p[:, 2])
    if np.any(areas <= 0.0):
        raise GeometryError("degenerate face")
    return BoundaryTriangulation(poly.points, tris, np.array(fids, dtype=np.int64), angles, areas)


@dataclass
class PathCertificate:
    """For each vertex, the admissible edges leading to a vertex of T_M."""

    paths: dict
    epsilon_used: float
    t_max: int

    def max_length(self):
        return max(len(p) for p in self.paths.values())


def admissible_edges(tri, eps):
    """Edges with an opposite angle at most (1 + eps) times the minimum
    angle of the triangle containing it, mapped to that triangle."""
    tm = tri.theta_m_per_triangle
    out = {}
    for e, owners in tri.edges().items():
        for t, c in owners:
            if tri.angles[t, c] <= (1.0 + eps) * tm[t]:
                out[e] = t
                break
    return out


def check_A2(tri, eps):
    """Breadth-first search from the vertices of the largest triangle over
    admissible edges. Returns a :class:`PathCertificate` or None."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    adm = admissible_edges(tri, eps)
    adj = {}
    for a, b in adm:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    t_max = int(np.argmax(tri.areas))
    parent = {int(v): None for v in tri.triangles[t_max]}
    queue = deque(sorted(parent))
    while queue:
        v = queue.popleft()
        for w in sorted(adj.get(v, ())):
            if w not in parent:
                parent[w] = v
                queue.append(w)
    verts = np.unique(tri.triangles)
    if any(int(v) not in parent for v in verts):
        return None
    paths = {}
    for start in verts:
        v, path = int(start), []
        while parent[v] is not None:
            path.append((v, parent[v]))
            v = parent[v]
        paths[int(start)] = path
    return PathCertificate(paths, float(eps), t_max)


def a2prime_epsilon(theta_M, theta_m, rho):
    """epsilon = theta_M / arcsin(rho sin(theta_m) sin(theta_M))."""
    arg = rho * np.sin(theta_m) * np.sin(theta_M)
    if arg >= 1.0:
        warnings.warn("arcsin argument >= 1; clamped")
        arg = 1.0
    return float(theta_M / np.arcsin(arg))


def check_A2prime(tri, theta_m, rho):
    """Local sufficient condition for the path check.

    Every triangle must share an edge with a triangle (possibly itself) whose
    minimum angle is at least ``theta_m`` and whose diameter is at least
    ``rho`` times its own. Returns the implied epsilon or None.
    """
    if not (0.0 < theta_m < np.pi and 0.0 < rho <= 1.0):
        raise ValueError("need 0 < theta_m < pi and 0 < rho <= 1")
    p = tri.points[tri.triangles]
    diam = np.max(np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2), axis=1)
    good_shape = tri.theta_m_per_triangle >= theta_m
    neighbours = [[t] for t in range(tri.n_T)]
    for owners in tri.edges().values():
        ts = [t for t, _ in owners]
        for t in ts:
            neighbours[t].extend(s for s in ts if s != t)
    for t in range(tri.n_T):
        if not any(good_shape[s] and diam[s] >= rho * diam[t] for s in neighbours[t]):
            return None
    return a2prime_epsilon(tri.theta_M, theta_m, rho)


def kappa(theta_M, eps):
    """sqrt(2 / sin((pi - theta_M) / (2 + eps)))."""
    return float(np.sqrt(2.0 / np.sin((np.pi - theta_M) / (2.0 + eps))))


def surface_matrices(tri):
    """P1 mass and stiffness matrices on the boundary triangulation."""
    p = tri.points[tri.triangles]
    area = tri.areas
    # gradients of the barycentric coordinates on each triangle
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    n = np.cross(e[:, 0], e[:, 1])
    n = n / np.linalg.norm(n, axis=1, keepdims=True)
    grads = np.cross(n[:, None, :], e) / (2.0 * area[:, None, None])
    local_k = area[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)
    local_m = area[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None] / 12.0
    nv = len(tri.points)
    rows = np.repeat(tri.triangles, 3, axis=1).ravel()
    cols = np.tile(tri.triangles, (1, 3)).ravel()
    M = coo_matrix((local_m.ravel(), (rows, cols)), shape=(nv, nv)).toarray()
    A = coo_matrix((local_k.ravel(), (rows, cols)), shape=(nv, nv)).toarray()
    return M, A


@dataclass
class PoincareProbe:
    ratio: float
    bound: float
    kappa: float

    @property
    def passed(self):
        return self.ratio <= self.bound


def poincare_ratio(tri):
    """max ||v - mean(v)||_{0,dK} / |v|_{1,dK} over the piecewise-affine trace space."""
    nv = len(tri.points)
    used = np.unique(tri.triangles)
    if len(used) != nv:
        raise GeometryError("boundary triangulation misses element vertices")
    adj = coo_matrix((np.ones(3 * tri.n_T), (tri.triangles.ravel(), np.roll(tri.triangles, 1, axis=1).ravel())), shape=(nv, nv))
    if connected_components(adj, directed=False)[0] != 1:
        raise GeometryError("disconnected boundary triangulation")
    M, A = surface_matrices(tri)
    m = M.sum(axis=1)
    area = m.sum()
    Md = M - np.outer(m, m) / area
    # a rank-one shift on the constant mode keeps the pencil definite
    Ar = A + (np.trace(A) / (m @ m)) * np.outer(m, m)
    lam = eigh(Md, Ar, eigvals_only=True, subset_by_index=[nv - 1, nv - 1])[0]
    return float(np.sqrt(max(lam, 0.0)))


def poincare_probe(poly, tri, eps):
    """Largest Poincare ratio against sqrt(5) kappa h_K N_T^(1/2)."""
    k = kappa(tri.theta_M, eps)
    bound = np.sqrt(5.0) * k * diameter(poly.points) * np.sqrt(tri.n_T)
    return PoincareProbe(poincare_ratio(tri), float(bound), k)


def sampled_poincare_ratio(tri, draws=1000, seed=0):
    """Cross-check of :func:`poincare_ratio` from random nodal vectors."""
    rng = np.random.default_rng(seed)
    M, A = surface_matrices(tri)
    m = M.sum(axis=1)
    V = rng.standard_normal((len(tri.points), draws))
    V = V - np.outer(np.ones(len(m)), (m @ V) / m.sum())
    num = np.einsum("id,ij,jd->d", V, M, V)
    den = np.einsum("id,ij,jd->d", V, A, V)
    return float(np.sqrt(np.max(num / den)))


def cotangent_identity_check(tri_pts, grad):
    """Relative residual of ||grad v||_T^2 = R_T sum_i cos(theta_i) ||grad v . t_i||_{e_i}^2.

    ``tri_pts`` is (3, d); ``grad`` is the gradient of an affine v (only its
    tangential part matters).
    """
    p = np.asarray(tri_pts, dtype=float)
    if p.shape[1] == 2:
        p = np.column_stack([p, np.zeros(3)])
    g = np.asarray(grad, dtype=float)
    if g.shape[0] == 2:
        g = np.append(g, 0.0)
    n = np.cross(p[1] - p[0], p[2] - p[0])
    area = 0.5 * np.linalg.norm(n)
    n = n / (2.0 * area)
    g = g - (g @ n) * n
    theta = triangle_angles(p[0], p[1], p[2])
    # edge i is opposite corner i
    edges = np.array([p[2] - p[1], p[0] - p[2], p[1] - p[0]])
    length = np.linalg.norm(edges, axis=1)
    t = edges / length[:, None]
    R = length[0] / (2.0 * np.sin(theta[0]))
    lhs = area * (g @ g)
    rhs = R * np.sum(np.cos(theta) * (t @ g) ** 2 * length)
    scale = max(abs(lhs), abs(rhs))
    return 0.0 if scale == 0.0 else abs(lhs - rhs) / scale


def opposite_angle_gap(tri_pts, corner, w_grad):
    """|w(x2) - w(x1)| and ||grad w||_{0,T} for the edge opposite ``corner``."""
    p = np.asarray(tri_pts, dtype=float)
    a, b = p[(corner + 1) % 3], p[(corner + 2) % 3]
    n = np.cross(p[1] - p[0], p[2] - p[0])
    area = 0.5 * np.linalg.norm(n)
    n = n / (2.0 * area)
    g = np.asarray(w_grad, dtype=float)
    g = g - (g @ n) * n
    return abs(g @ (b - a)), float(np.sqrt(area) * np.linalg.norm(g))
