"""Manufactured interface problems -div(beta grad u) = f with exact solutions.

Each problem pairs a level set with a solution that is continuous across the
zero set and has continuous flux, so the same f holds on both sides.
"""
from dataclasses import dataclass

import numpy as np

from .mesh import plane_levelset, sphere, squircle


@dataclass(frozen=True)
class Problem:
    levelset: object
    beta_minus: float
    beta_plus: float
    u_minus: object
    u_plus: object
    grad_minus: object
    grad_plus: object
    f: object

    def side(self, x):
        return np.where(self.levelset.value(x) < 0, -1, 1)

    def u(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.where(self.side(x) < 0, self.u_minus(x), self.u_plus(x))

    def grad(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.where(self.side(x)[:, None] < 0, self.grad_minus(x), self.grad_plus(x))

    def beta(self, x):
        return np.where(self.side(x) < 0, self.beta_minus, self.beta_plus)


def squircle_problem(eps=0.1, beta_minus=1.0, beta_plus=10.0, alpha=0.5):
    """u = s^a / b- inside and s^a / b+ + (1/b- - 1/b+) r0^(4a) outside, s = sum x_i^4."""
    r0 = 0.75 - eps
    shift = (1.0 / beta_minus - 1.0 / beta_plus) * r0 ** (4 * alpha)

    def s_of(x):
        return np.sum(x**4, axis=-1)

    def power(x):
        return s_of(x) ** alpha

    def dpower(x):
        s = s_of(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(s > 0, alpha * s ** (alpha - 1), 0.0)
        return fac[:, None] * 4.0 * x**3

    def f(x):
        s = s_of(x)
        safe = np.where(s > 0, s, 1.0)
        val = -alpha * ((alpha - 1) * safe ** (alpha - 2) * np.sum(16 * x**6, axis=-1) + safe ** (alpha - 1) * np.sum(12 * x**2, axis=-1))
        return np.where(s > 0, val, 0.0)

    return Problem(
        squircle(eps),
        beta_minus,
        beta_plus,
        lambda x: power(x) / beta_minus,
        lambda x: power(x) / beta_plus + shift,
        lambda x: dpower(x) / beta_minus,
        lambda x: dpower(x) / beta_plus,
        f,
    )


def sphere_problem(radius=0.6, beta_minus=1.0, beta_plus=10.0):
    """u = |x|^2 / b- inside and |x|^2 / b+ + (1/b- - 1/b+) R^2 outside; f = -6."""
    shift = (1.0 / beta_minus - 1.0 / beta_plus) * radius**2

    def r2(x):
        return np.sum(x**2, axis=-1)

    return Problem(
        sphere(radius),
        beta_minus,
        beta_plus,
        lambda x: r2(x) / beta_minus,
        lambda x: r2(x) / beta_plus + shift,
        lambda x: 2 * x / beta_minus,
        lambda x: 2 * x / beta_plus,
        lambda x: np.full(len(x), -6.0),
    )


def plane_problem(offset=0.5, normal=(0.0, 0.0, 1.0), beta_minus=1.0, beta_plus=100.0, tangent=(1.0, -1.0, 0.5), c=1.0):
    """Piecewise affine u = c + t . x + phi / beta, t tangent to the plane; f = 0."""
    ls = plane_levelset(normal, offset)
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    t = np.asarray(tangent, dtype=float)
    t = t - (t @ n) * n

    def make(beta):
        return (lambda x: c + x @ t + ls.value(x) / beta, lambda x: np.broadcast_to(t + n / beta, np.shape(x)).copy())

    um, gm = make(beta_minus)
    up, gp = make(beta_plus)
    return Problem(ls, beta_minus, beta_plus, um, up, gm, gp, lambda x: np.zeros(len(x)))


def affine_problem(levelset, coef=(1.0, 2.0, -1.0, 3.0), beta=1.0):
    """u = a0 + a . x with beta constant on both sides (patch test)."""
    a0, a = coef[0], np.asarray(coef[1:], dtype=float)

    def u(x):
        return a0 + x @ a

    def g(x):
        return np.broadcast_to(a, np.shape(x)).copy()

    return Problem(levelset, beta, beta, u, u, g, g, lambda x: np.zeros(len(x)))


def make_problem(levelset, eps=0.1, beta_minus=1.0, beta_plus=10.0, alpha=0.5):
    """Built-in problem for a level-set name."""
    if levelset == "squircle":
        return squircle_problem(eps, beta_minus, beta_plus, alpha)
    if levelset == "sphere":
        return sphere_problem(0.6, beta_minus, beta_plus)
    if levelset == "plane":
        return plane_problem(0.5 - eps, beta_minus=beta_minus, beta_plus=beta_plus)
    raise ValueError("unknown level set %r" % levelset)
