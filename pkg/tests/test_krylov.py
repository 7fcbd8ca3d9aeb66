import csv

import numpy as np
import pytest
import scipy.sparse as sp

from inneriter import krylov as kr
from inneriter.krylov import Termination
from inneriter.splittings import InnerIterationPreconditioner, classic_build

from helpers import random_dd


def _nonsingular(n=30, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, n)) + 2 * np.sqrt(n) * np.eye(n), rng.standard_normal(n)


def test_identity_one_iteration():
    b = np.arange(1.0, 6.0)
    rep = kr.gmres(np.eye(5), b)
    assert rep.outer_iterations == 1
    assert rep.solved
    assert np.allclose(rep.x, b)


def test_zero_rhs_returns_immediately():
    rep = kr.gmres(np.eye(3), np.zeros(3))
    assert rep.outer_iterations == 0 and rep.termination is Termination.CONVERGED


def test_solution_matches_dense_solve():
    A, b = _nonsingular()
    rep = kr.gmres(A, b, tol=1e-12)
    assert rep.termination is Termination.CONVERGED
    ref = np.linalg.solve(A, b)
    assert np.linalg.norm(rep.x - ref) / np.linalg.norm(ref) < 1e-9


def test_sparse_and_dense_agree():
    A, b = _nonsingular(seed=1)
    r1 = kr.gmres(A, b)
    r2 = kr.gmres(sp.csr_matrix(A), b)
    assert r1.outer_iterations == r2.outer_iterations
    assert np.allclose(r1.x, r2.x, rtol=1e-10)


def test_arnoldi_relation_and_orthogonality():
    A, b = _nonsingular(n=40, seed=2)
    for reorth in (False, True):
        rep = kr.gmres(A, b, tol=1e-10, keep_state=True, reorthogonalize=reorth)
        st = rep.state
        m = rep.outer_iterations
        V = st.V[: m + 1].T
        Hm = st.H[: m + 1, :m]
        Z = st.Z[:m].T
        assert np.linalg.norm(A @ Z - V @ Hm) / np.linalg.norm(A @ Z) < 1e-12
        assert np.allclose(st.cs[:m] ** 2 + st.sn[:m] ** 2, 1.0)
        # plain MGS loses orthogonality only gradually
        loss = np.abs(V.T @ V - np.eye(m + 1)).max()
        assert loss < (1e-12 if reorth else 1e-4)


def test_residual_history_nonincreasing_and_matches_true():
    A, b = _nonsingular(seed=3)
    rep = kr.gmres(A, b, track_true_residual=True)
    h = np.array(rep.residual_history)
    assert np.all(np.diff(h) <= 1e-12 * h[0])
    t = np.array(rep.true_residual_history)
    assert np.allclose(h, t, rtol=1e-6, atol=1e-12 * h[0])


def test_reorthogonalize_same_answer():
    A, b = _nonsingular(seed=4)
    r1 = kr.gmres(A, b)
    r2 = kr.gmres(A, b, reorthogonalize=True)
    assert abs(r1.outer_iterations - r2.outer_iterations) <= 1
    assert r2.relative_residual <= 1e-6


def test_happy_breakdown():
    A = np.diag([1.0, 2.0, 3.0, 4.0])
    rep = kr.gmres(A, np.array([1.0, 0, 0, 0]))
    assert rep.termination is Termination.HAPPY_BREAKDOWN
    assert rep.outer_iterations == 1
    assert np.allclose(rep.x, [1, 0, 0, 0])


def test_hard_breakdown_on_nilpotent():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    b = np.array([1.0, 0.0])  # b in R(A) but GMRES from zero breaks down
    rep = kr.gmres(A, b)
    assert rep.termination is Termination.BREAKDOWN
    assert rep.failed_step == 1
    assert np.isclose(rep.relative_residual, 1.0)
    assert np.all(np.isfinite(rep.x))


def test_max_iterations():
    A, b = _nonsingular(seed=5)
    rep = kr.gmres(A, b, tol=1e-14, maxit=3)
    assert rep.termination is Termination.MAX_ITERATIONS
    assert rep.outer_iterations == 3


def test_bad_inputs():
    with pytest.raises(ValueError):
        kr.gmres(np.eye(3), np.ones(4))
    with pytest.raises(ValueError):
        kr.gmres(np.eye(3), np.ones(3), tol=0.0)


def test_nan_preconditioner_is_numerical_failure():
    P = kr.CallablePreconditioner(lambda v: np.full_like(v, np.nan))
    with pytest.raises(kr.NumericalFailure) as exc:
        kr.gmres(np.eye(3), np.ones(3), P)
    assert exc.value.step == 1


def test_right_preconditioning_with_exact_inverse():
    A, b = _nonsingular(seed=6)
    Ainv = np.linalg.inv(A)
    rep = kr.gmres(A, b, lambda v: Ainv @ v)
    assert rep.outer_iterations == 1 and rep.solved


def test_gmres_inner_equals_explicit_preconditioner():
    rng = np.random.default_rng(7)
    A = random_dd(25, rng)
    b = rng.standard_normal(25)
    s = classic_build(A, "gauss-seidel")
    r1 = kr.gmres_inner(A, b, s, 3)
    P = InnerIterationPreconditioner(s, 3)
    r2 = kr.gmres(A, b, P)
    assert r1.outer_iterations == r2.outer_iterations
    assert np.array_equal(r1.x, r2.x)
    assert r1.inner_iteration_counts == [3] * r1.outer_iterations


def test_fgmres_inner_target_rule():
    rng = np.random.default_rng(8)
    A = random_dd(30, rng)
    b = rng.standard_normal(30)
    s = classic_build(A, "jacobi")
    rep = kr.fgmres(A, b, InnerIterationPreconditioner(s), keep_state=True)
    assert rep.termination is Termination.CONVERGED
    st = rep.state
    for k, count in enumerate(rep.inner_iteration_counts):
        target = 1.0 if k == 0 else abs(st.cs[k - 1])
        v, z = st.V[k], st.Z[k]
        assert np.linalg.norm(v - A @ z) < target
        assert count >= 1


def test_fgmres_cap_gives_inner_failure():
    from inneriter.matcore import tridiag

    A = tridiag(30, -1.0, 2.0, -1.0)
    b = np.random.default_rng(9).standard_normal(30)
    s = classic_build(A, "jacobi")
    rep = kr.fgmres(A, b, InnerIterationPreconditioner(s), inner_cap=1, tol=1e-12)
    assert rep.inner_failure
    assert rep.termination is Termination.BREAKDOWN
    assert rep.failed_step >= 1


def test_trace_csv(tmp_path):
    A, b = _nonsingular(seed=10)
    rep = kr.gmres(A, b)
    path = tmp_path / "t.csv"
    kr.write_trace_csv(rep, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["step", "residual_norm", "inner_iterations"]
    assert len(rows) == rep.outer_iterations + 2
    assert float(rows[1][1]) == rep.residual_history[0]


def test_cg_and_lsqr():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((20, 20))
    S = X @ X.T + 20 * np.eye(20)
    b = rng.standard_normal(20)
    x, its, ok = kr.cg(S, b, 1e-12, 100)
    assert ok and np.linalg.norm(S @ x - b) <= 1e-12 * np.linalg.norm(b) * 1.0001
    K = X - X.T + 3 * np.eye(20)
    x, its, ok = kr.lsqr(K, b, 1e-10, 200)
    assert ok and np.linalg.norm(K @ x - b) <= 1e-9 * np.linalg.norm(b)
    _, its, ok = kr.cg(S, b, 1e-12, 2)
    assert not ok and its == 2
