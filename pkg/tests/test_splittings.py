import numpy as np
import pytest

from inneriter.krylov import InnerSolveError
from inneriter.problems import stokes_generate, structured_generate
from inneriter.splittings import (
    InnerIterationPreconditioner,
    apply_Cl,
    classic_build,
    default_gss_beta,
    gss_build,
    hss_build,
    igss_build,
    ihss_build,
    preconditioner_matrix,
    saddle_matrix,
    stationary_run,
)

from helpers import random_dd


def _all_splittings():
    rng = np.random.default_rng(0)
    A = random_dd(15, rng)
    out = [(f"{k}", A, classic_build(A, k, omega=1.3)) for k in ("jacobi", "gauss-seidel", "sor", "ssor")]
    P = stokes_generate(2, 1.0)
    out.append(("gss", P.A.toarray(), gss_build(P.blocks["C"], P.blocks["B"], 3.0)))
    S = structured_generate(4, 2, density_target=0.0)
    out.append(("hss", S.A.toarray(), hss_build(S.A, 0.3)))
    return out


@pytest.mark.parametrize("name,A,s", _all_splittings(), ids=lambda x: x if isinstance(x, str) else "")
def test_splitting_identity_and_step(name, A, s):
    M, N = s.M_dense(), s.N_dense()
    assert np.abs(M - N - A).max() <= 1e-12 * np.abs(A).max()
    rng = np.random.default_rng(1)
    z, v = rng.standard_normal(s.n), rng.standard_normal(s.n)
    ref = np.linalg.solve(M, N @ z + v)
    assert np.linalg.norm(s.step(z, v) - ref) <= 1e-10 * np.linalg.norm(ref)


@pytest.mark.parametrize("name,A,s", _all_splittings(), ids=lambda x: x if isinstance(x, str) else "")
def test_preconditioner_matrix_matches_inner_steps(name, A, s):
    v = np.random.default_rng(2).standard_normal(s.n)
    for ell in (1, 2, 4):
        ref = apply_Cl(s, v, ell)
        got = preconditioner_matrix(s, ell) @ v
        assert np.linalg.norm(got - ref) <= 1e-9 * max(np.linalg.norm(ref), 1.0)


def test_hss_iteration_matrix_is_I_minus_Minv_A():
    S = structured_generate(4, 1, density_target=0.0)
    s = hss_build(S.A, 0.5)
    A = S.A.toarray()
    ref = np.eye(s.n) - np.linalg.solve(s.M_dense(), A)
    assert np.abs(s.H_dense() - ref).max() <= 1e-10


def test_C_ell_telescopes_for_nonsingular():
    rng = np.random.default_rng(3)
    A = random_dd(12, rng)
    s = classic_build(A, "gauss-seidel")
    H = s.H_dense()
    for ell in (1, 3):
        ref = (np.eye(12) - np.linalg.matrix_power(H, ell)) @ np.linalg.inv(A)
        assert np.allclose(preconditioner_matrix(s, ell), ref, atol=1e-12)


def test_jacobi_on_diagonal_is_exact():
    s = classic_build(np.diag([2.0, 4.0]), "jacobi")
    assert np.array_equal(s.step(np.zeros(2), np.array([2.0, 4.0])), [1.0, 1.0])


def test_stationary_run_converges():
    rng = np.random.default_rng(4)
    A = random_dd(20, rng)
    b = rng.standard_normal(20)
    rep = stationary_run(classic_build(A, "gauss-seidel"), b, steps=60)
    assert rep.final_inner_residual < 1e-10
    assert rep.relative_difference < 1e-10


def test_default_gss_beta():
    P = stokes_generate(2, 1.0)
    C, B = P.blocks["C"].toarray(), P.blocks["B"].toarray()
    assert np.isclose(default_gss_beta(C, B), np.linalg.norm(B, 2) ** 2 / np.linalg.norm(C, 2))
    s = gss_build(C, B, 1.0)
    assert np.isclose(s.beta, default_gss_beta(C, B))
    assert np.array_equal(saddle_matrix(C, B).toarray(), P.A.toarray())


def test_inexact_variants_approach_exact():
    P = stokes_generate(2, 1.0)
    C, B = P.blocks["C"], P.blocks["B"]
    v = np.random.default_rng(5).standard_normal(P.n)
    e = apply_Cl(gss_build(C, B, 2.0), v, 2)
    i = apply_Cl(igss_build(C, B, 2.0, inner_tol=1e-13), v, 2)
    assert np.linalg.norm(e - i) <= 1e-10 * np.linalg.norm(e)
    S = structured_generate(4, 1, density_target=0.0)
    e = apply_Cl(hss_build(S.A, 0.4), S.b, 2)
    i = apply_Cl(ihss_build(S.A, 0.4, inner_tol=1e-13), S.b, 2)
    assert np.linalg.norm(e - i) <= 1e-9 * np.linalg.norm(e)


def test_inexact_flags():
    P = stokes_generate(2, 1.0)
    s = igss_build(P.blocks["C"], P.blocks["B"], 2.0)
    assert not s.exact and s.kind == "igss"
    assert s.descriptor()["inner_maxit"] == P.n
    assert not InnerIterationPreconditioner(s).linear
    assert InnerIterationPreconditioner(gss_build(P.blocks["C"], P.blocks["B"], 2.0)).linear


def test_inner_cap_raises():
    P = stokes_generate(4, 1.0)
    s = igss_build(P.blocks["C"], P.blocks["B"], 2.0, inner_tol=1e-12, inner_maxit=1)
    with pytest.raises(InnerSolveError):
        s.step(np.zeros(P.n), P.b)
    S = structured_generate(4, 2, density_target=0.0)
    s = ihss_build(S.A, 0.1, inner_tol=1e-14, inner_maxit=1)
    with pytest.raises(InnerSolveError):
        s.step(np.zeros(S.n), S.b)


def test_invalid_arguments():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    with pytest.raises(ValueError):
        classic_build(A, "richardson")
    with pytest.raises(ValueError):
        classic_build(np.array([[0.0, 1.0], [1.0, 2.0]]), "jacobi")
    with pytest.raises(ValueError):
        classic_build(A, "sor", omega=2.0)
    with pytest.raises(ValueError):
        hss_build(A, 0.0)
    P = stokes_generate(2, 1.0)
    with pytest.raises(ValueError):
        gss_build(P.blocks["C"], P.blocks["B"], -1.0)
    with pytest.raises(ValueError):
        gss_build(P.blocks["C"], P.blocks["B"][:, :-1], 1.0)
