import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.sparse import csr_matrix

from ivem.mesh import build_mesh, squircle
from ivem.problems import affine_problem, squircle_problem
from ivem.solve_analyze import ErrorRecord, SolveError, compute_errors, convergence_rates, run_level, solve
from ivem.vem_core import GlobalSystem, assemble


def tiny_system(a, b):
    A = csr_matrix(np.atleast_2d(a))
    n = A.shape[0]
    return GlobalSystem(A, np.atleast_1d(np.asarray(b, float)), np.arange(n), np.zeros(n), n)


def test_one_by_one():
    u, rep = solve(tiny_system([[2.0]], [4.0]))
    assert u[0] == pytest.approx(2.0) and rep.iterations == 1


def test_cg_branch_matches_dense(rng):
    n = 60
    Q = rng.standard_normal((n, n))
    A = Q @ Q.T + n * np.eye(n)
    b = rng.standard_normal(n)
    u_dense, _ = solve(tiny_system(A, b))
    u_cg, rep = solve(tiny_system(A, b), tol=1e-12, dense_limit=0)
    assert rep.method == "cg_jacobi" and rep.iterations > 0
    assert rep.residual <= 1e-12
    np.testing.assert_allclose(u_cg, u_dense, atol=1e-9)


def test_cg_failure_reports_residual(rng):
    # 1D Laplacian: Jacobi leaves it badly conditioned
    n = 200
    A = 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    with pytest.raises(SolveError) as info:
        solve(tiny_system(A, rng.standard_normal(n)), tol=1e-14, max_iter=2, dense_limit=0)
    assert info.value.residual > 0


def test_rates_examples():
    recs = [ErrorRecord(8 * 2**k, 0.25 / 2**k, e, e, 1) for k, e in enumerate([1.0, 0.5, 0.25])]
    assert convergence_rates(recs) == pytest.approx([1.0, 1.0])
    recs = [ErrorRecord(8, 0.25, 1.0, 1.0, 1), ErrorRecord(16, 0.125, 0.25, 0.25, 1)]
    assert convergence_rates(recs, "l2_err") == pytest.approx([2.0])
    with pytest.raises(ValueError):
        convergence_rates(recs[:1])
    with pytest.raises(ValueError):
        convergence_rates([recs[0], ErrorRecord(32, 0.0625, 0.1, 0.1, 1)])


@given(st.floats(0.1, 3.0), st.floats(1e-6, 1e2))
def test_rates_recover_power_law(p, c):
    recs = [ErrorRecord(n, 2.0 / n, c * (2.0 / n) ** p, 1.0, 1) for n in (8, 16, 32, 64)]
    assert convergence_rates(recs) == pytest.approx([p] * 3, rel=1e-9)


@pytest.mark.parametrize("kind", ["fitted", "unfitted"])
def test_affine_exact_solve(kind):
    ls = squircle(0.1)
    pb = affine_problem(ls)
    mesh = build_mesh(8, ls, kind)
    system = assemble(mesh, 1.0, 1.0, pb.f, pb.u)
    u, rep = solve(system)
    assert rep.residual <= 1e-10
    err = compute_errors(mesh, system, u, pb)
    assert err.max_nodal_err <= 1e-10
    assert err.energy_err <= 1e-10 and err.l2_err <= 1e-10


def test_squircle_cg_run():
    pb = squircle_problem(0.1, 1.0, 10.0)
    rec, mesh, system, u = run_level(pb, 16, "fitted")
    assert rec.cg_iters > 0
    r = system.matrix @ u[system.free] - system.rhs
    assert np.linalg.norm(r) <= 1e-9 * np.linalg.norm(system.rhs)
    assert np.isfinite(rec.energy_err) and rec.energy_err > 0
    assert np.isfinite(rec.l2_err) and rec.l2_err > 0


def test_errors_decrease():
    pb = squircle_problem(0.1, 1.0, 10.0)
    recs = [run_level(pb, n, "unfitted")[0] for n in (4, 8, 16)]
    assert recs[0].energy_err > recs[1].energy_err > recs[2].energy_err
    assert recs[0].l2_err > recs[1].l2_err > recs[2].l2_err
