"""Quadrature rules on tetrahedra and boxes.

Rules are stored as barycentric points plus weights that sum to one, so a
rule is mapped to a physical tetrahedron by scaling the weights with its
volume.
"""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

_A = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
_B = (5.0 - np.sqrt(5.0)) / 20.0

#: 4-point rule, exact for polynomials of total degree 2.
TET_DEG2_BARY = np.array(
    [
        [_A, _B, _B, _B],
        [_B, _A, _B, _B],
        [_B, _B, _A, _B],
        [_B, _B, _B, _A],
    ]
)
TET_DEG2_WEIGHTS = np.full(4, 0.25)


@lru_cache(maxsize=None)
def tet_rule(degree):
    """Collapsed Gauss-Jacobi rule on the reference tetrahedron.

    Returns ``(bary, weights)`` with ``bary`` of shape (q, 4) and weights
    summing to one. The rule is exact for polynomials of total degree
    ``degree``.
    """
    if degree <= 2:
        return TET_DEG2_BARY, TET_DEG2_WEIGHTS
    n = (degree + 2) // 2
    ta, wa = roots_jacobi(n, 2.0, 0.0)
    tb, wb = roots_jacobi(n, 1.0, 0.0)
    tc, wc = roots_jacobi(n, 0.0, 0.0)
    a, b, c = (ta + 1) / 2, (tb + 1) / 2, (tc + 1) / 2
    wa, wb, wc = wa / 8, wb / 4, wc / 2
    A, B, C = np.meshgrid(a, b, c, indexing="ij")
    W = wa[:, None, None] * wb[None, :, None] * wc[None, None, :]
    x = A
    y = (1 - A) * B
    z = (1 - A) * (1 - B) * C
    x, y, z, W = x.ravel(), y.ravel(), z.ravel(), W.ravel()
    bary = np.column_stack([1 - x - y - z, x, y, z])
    return bary, W * 6.0


@lru_cache(maxsize=None)
def box_rule(n):
    """Tensor Gauss-Legendre rule on the unit cube [0, 1]^3."""
    t, w = np.polynomial.legendre.leggauss(n)
    t, w = (t + 1) / 2, w / 2
    X, Y, Z = np.meshgrid(t, t, t, indexing="ij")
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    return np.column_stack([X.ravel(), Y.ravel(), Z.ravel()]), W.ravel()


def tet_volumes(tets):
    """Signed volumes of an (m, 4, 3) array of tetrahedra."""
    tets = np.asarray(tets, dtype=float)
    e = tets[:, 1:, :] - tets[:, :1, :]
    return np.linalg.det(e) / 6.0


def map_tet_rule(tets, degree=2):
    """Physical quadrature points (m, q, 3) and weights (m, q) for ``tets``."""
    tets = np.asarray(tets, dtype=float)
    bary, w = tet_rule(degree)
    pts = np.einsum("qv,mvd->mqd", bary, tets)
    vol = np.abs(tet_volumes(tets))
    return pts, vol[:, None] * w[None, :]
