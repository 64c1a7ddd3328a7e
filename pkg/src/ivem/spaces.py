"""Local function spaces: affine and immersed (IFE) projection spaces,
nodal interpolation of boundary traces, and the patch quasi-interpolant.

An IFE function on an element cut by a plane with unit normal n is
``c + p . (x - x_K)`` on the minus side and ``c + (M+ p) . (x - x_K)`` on the
plus side, with x_K on the plane. ``M+`` keeps the tangential part of the
gradient and scales the normal part by beta-/beta+, so the function is
continuous and its flux is continuous across the plane.
"""
from dataclasses import dataclass

import numpy as np

from .geometry import GeometryError, Plane
from .quadrature import map_tet_rule


@dataclass(frozen=True)
class IfeFrame:
    n_bar: np.ndarray
    t1_bar: np.ndarray
    t2_bar: np.ndarray
    x_K: np.ndarray
    M_minus: np.ndarray
    M_plus: np.ndarray
    beta_minus: float
    beta_plus: float

    @property
    def plane(self):
        return Plane.through(self.x_K, self.n_bar)

    def side(self, x):
        """-1 on the minus side, +1 on the plus side (0 counts as minus)."""
        d = (np.asarray(x, dtype=float) - self.x_K) @ self.n_bar
        return np.where(d > 0, 1, -1)


def tangent_pair(n):
    """Orthonormal t1, t2 with t1 = n x (least aligned axis), t2 = n x t1."""
    n = np.asarray(n, dtype=float)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(n)))] = 1.0
    t1 = np.cross(n, axis)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


def ife_frame(plane, beta_minus, beta_plus, anchor=None):
    """Frame of an interface plane and the jump matrices M-, M+.

    ``anchor`` is projected onto the plane to give x_K (default: the plane
    point closest to the origin).
    """
    if beta_minus <= 0 or beta_plus <= 0:
        raise ValueError("coefficients must be positive")
    n = plane.normal
    t1, t2 = tangent_pair(n)
    x_K = plane.project(np.zeros(3) if anchor is None else anchor)
    # tangential parts pass through; the normal part scales by the contrast
    nn = np.outer(n, n)
    r = beta_plus / beta_minus
    M_minus = np.eye(3) + (r - 1.0) * nn
    M_plus = np.eye(3) + (1.0 / r - 1.0) * nn
    return IfeFrame(n, t1, t2, x_K, M_minus, M_plus, float(beta_minus), float(beta_plus))


@dataclass(frozen=True)
class WhFunction:
    """Member of the local projection space.

    Affine kind: ``c + grad . (x - anchor)``. IFE kind: ``grad`` is p- and
    the anchor is the frame's x_K.
    """

    grad: np.ndarray
    c: float
    anchor: np.ndarray
    frame: IfeFrame = None

    @property
    def kind(self):
        return "affine" if self.frame is None else "ife"

    def gradient_on(self, side):
        if self.frame is None or side < 0:
            return np.asarray(self.grad, dtype=float)
        return self.frame.M_plus @ self.grad

    def eval(self, x, side=None):
        """Values and gradients at points ``x`` (m, 3).

        For the IFE kind ``side`` (-1/+1, scalar or per point) defaults to
        the side of the plane each point lies on.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.frame is None:
            g = np.broadcast_to(self.grad, x.shape)
        else:
            s = self.frame.side(x) if side is None else np.broadcast_to(side, (len(x),))
            g = np.where(s[:, None] > 0, self.frame.M_plus @ self.grad, self.grad)
        return self.c + np.einsum("md,md->m", g, x - self.anchor), np.array(g)

    def reanchor(self, new_anchor):
        """Same function written about another anchor (on the plane for IFE)."""
        new_anchor = np.asarray(new_anchor, dtype=float)
        value, _ = self.eval(new_anchor[None], side=-1)
        frame = self.frame
        if frame is not None:
            frame = IfeFrame(frame.n_bar, frame.t1_bar, frame.t2_bar, new_anchor, frame.M_minus, frame.M_plus, frame.beta_minus, frame.beta_plus)
        return WhFunction(self.grad, float(value[0]), new_anchor, frame)


def constant(c, anchor=np.zeros(3), frame=None):
    return WhFunction(np.zeros(3), float(c), np.asarray(anchor, dtype=float), frame)


def nodal_interpolant(u, points):
    """Boundary DoFs: values of ``u`` at the element vertices."""
    return np.asarray(u(np.asarray(points, dtype=float)), dtype=float)


def hat_dof_matrix(points):
    """Values of each boundary hat at each vertex (the identity)."""
    n = len(points)
    return np.eye(n)


def affine_least_squares(u, tets, anchor, degree=2):
    """Weighted least-squares affine fit (c, g) of ``u`` on tet quadrature."""
    pts, w = map_tet_rule(tets, degree)
    x = pts.reshape(-1, 3) - anchor
    w = w.ravel()
    V = np.column_stack([np.ones(len(x)), x])
    G = V.T @ (w[:, None] * V)
    if np.linalg.matrix_rank(G, tol=1e-12 * np.abs(G).max()) < 4:
        raise GeometryError("rank-deficient patch quadrature")
    coef = np.linalg.solve(G, V.T @ (w * u(pts.reshape(-1, 3))))
    return coef[0], coef[1:]


def quasi_interpolant_JK(u_minus, frame, patch_tets):
    """J_K u: affine L2 fit of the minus extension on the patch, extended to
    the plus side by the flux-jump correction.

    ``u_minus`` evaluates the (extended) minus-side field; ``patch_tets`` is
    an (m, 4, 3) decomposition of the patch.
    """
    c, g = affine_least_squares(u_minus, patch_tets, frame.x_K)
    return WhFunction(g, float(c), frame.x_K, frame)


def patch_elements(mesh, k):
    """Element ``k`` and its face neighbours."""
    faces = {tuple(sorted(f)) for f in mesh.elements[k].global_faces()}
    out = [k]
    cell = mesh.elements[k].cell
    n = mesh.n
    i, j, l = cell % n, (cell // n) % n, cell // (n * n)
    near = set()
    for di, dj, dl in ((0, 0, 0), (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
        a, b, c = i + di, j + dj, l + dl
        if 0 <= a < n and 0 <= b < n and 0 <= c < n:
            near.add(a + n * b + n * n * c)
    for m, e in enumerate(mesh.elements):
        if m == k or e.cell not in near:
            continue
        if any(tuple(sorted(f)) in faces for f in e.global_faces()):
            out.append(m)
    return out
