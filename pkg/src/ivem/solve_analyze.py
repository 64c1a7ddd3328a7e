"""Linear solves, error norms, convergence rates and the study driver."""
from dataclasses import dataclass, field
import logging
import time

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.linalg import LinearOperator, cg

from .mesh import build_mesh
from .quadrature import box_rule, map_tet_rule
from .vem_core import assemble, reference_cube

log = logging.getLogger(__name__)

DENSE_LIMIT = 3000


class SolveError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__("%s (best relative residual %.3e)" % (message, residual))
        self.residual = residual


@dataclass
class SolveReport:
    iterations: int
    residual: float
    method: str


def solve(system, tol=1e-10, max_iter=50000, dense_limit=DENSE_LIMIT):
    """Solve for the free DoFs; returns the full nodal vector and a report."""
    A, b = system.matrix, system.rhs
    u = system.values.copy()
    n = len(b)
    if n == 0:
        return u, SolveReport(0, 0.0, "dense_cholesky")
    bnorm = np.linalg.norm(b)
    if n < dense_limit:
        x = cho_solve(cho_factor(A.toarray()), b)
        res = np.linalg.norm(A @ x - b) / bnorm if bnorm > 0 else 0.0
        u[system.free] = x
        return u, SolveReport(1, float(res), "dense_cholesky")
    d = A.diagonal()
    M = LinearOperator((n, n), matvec=lambda r: r / d, dtype=float)
    count = [0]

    def step(_):
        count[0] += 1

    x, info = cg(A, b, rtol=tol, atol=0.0, maxiter=max_iter, M=M, callback=step)
    res = np.linalg.norm(A @ x - b) / bnorm if bnorm > 0 else 0.0
    if info != 0:
        raise SolveError("CG did not converge in %d iterations" % max_iter, float(res))
    u[system.free] = x
    return u, SolveReport(count[0], float(res), "cg_jacobi")


@dataclass
class ErrorRecord:
    N: int
    h: float
    energy_err: float
    l2_err: float
    dofs: int
    cg_iters: int = 0
    wall_ms: float = 0.0
    max_nodal_err: float = 0.0


def _side_errors(problem, x, w, beta, grad_h, val_h):
    du = problem.grad(x) - grad_h
    e = problem.u(x) - val_h
    return beta * np.sum(w * np.einsum("md,md->m", du, du)), np.sum(w * e * e)


def compute_errors(mesh, system, u_h, problem, degree=5):
    """Broken beta-weighted H1 and L2 errors of u - Pi u_h.

    The exact branch is chosen by the true level-set sign; Pi u_h uses the
    element's own side data.
    """
    ref = reference_cube()
    en2 = 0.0
    l22 = 0.0
    if len(system.regular):
        ids = np.array([mesh.elements[k].vertex_ids for k in system.regular], dtype=np.int64)
        h = system.h_regular
        lo = mesh.vertices[ids[:, 0]]
        qp, qw = box_rule(3)
        d = u_h[ids]
        c = d @ ref.projector[0]
        g = (d @ ref.projector[1:].T) / h[:, None]
        x = lo[:, None, :] + h[:, None, None] * qp[None]
        w = h[:, None] ** 3 * qw[None]
        xc = lo + 0.5 * h[:, None]
        val = c[:, None] + np.einsum("md,mqd->mq", g, x - xc[:, None, :])
        xf = x.reshape(-1, 3)
        du = problem.grad(xf).reshape(x.shape) - g[:, None, :]
        e = problem.u(xf).reshape(w.shape) - val
        en2 += float(np.sum(system.beta_regular[:, None] * w * np.einsum("mqd,mqd->mq", du, du)))
        l22 += float(np.sum(w * e * e))
    for k, item in enumerate(system.local):
        if item is None:
            continue
        el, ops = item
        coef = ops.projector @ u_h[mesh.elements[k].vertex_ids]
        c, p = coef[0], coef[1:]
        for s in el.sides:
            if not len(s.tets):
                continue
            pts, w = map_tet_rule(s.tets, degree)
            x = pts.reshape(-1, 3)
            g = s.P @ p
            a, b = _side_errors(problem, x, w.ravel(), s.beta, g[None, :], c + (x - el.anchor) @ g)
            en2 += a
            l22 += b
    nodal = float(np.max(np.abs(u_h - problem.u(mesh.vertices)))) if len(u_h) else 0.0
    return ErrorRecord(mesh.n, mesh.h, float(np.sqrt(en2)), float(np.sqrt(l22)), len(system.free), max_nodal_err=nodal)


def convergence_rates(errors, key="energy_err"):
    """log2 ratios of successive errors on a doubling sequence of N."""
    if len(errors) < 2:
        raise ValueError("need at least two records")
    out = []
    for a, b in zip(errors, errors[1:]):
        ea, eb = getattr(a, key), getattr(b, key)
        if b.N != 2 * a.N:
            raise ValueError("levels must double N")
        if not (ea > 0 and eb > 0):
            raise ValueError("errors must be positive")
        out.append(float(np.log2(ea / eb)))
    return out


@dataclass
class StudyResult:
    records: list = field(default_factory=list)

    def rates(self, key):
        return convergence_rates(self.records, key)


def run_level(problem, n, kind, tol=1e-10):
    """Mesh, assemble, solve and measure one level."""
    t0 = time.perf_counter()
    mesh = build_mesh(n, problem.levelset, kind)
    system = assemble(mesh, problem.beta_minus, problem.beta_plus, problem.f, problem.u)
    u_h, report = solve(system, tol)
    rec = compute_errors(mesh, system, u_h, problem)
    rec.cg_iters = report.iterations if report.method == "cg_jacobi" else 0
    rec.wall_ms = 1000.0 * (time.perf_counter() - t0)
    log.info("N=%d dofs=%d energy=%.4e l2=%.4e (%s, %d it)", n, rec.dofs, rec.energy_err, rec.l2_err, report.method, report.iterations)
    return rec, mesh, system, u_h


def run_study(problem, n_list, kind, tol=1e-10):
    return StudyResult([run_level(problem, n, kind, tol)[0] for n in n_list])
