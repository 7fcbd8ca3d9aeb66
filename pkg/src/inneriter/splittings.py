"""Stationary splittings A = M - N used as inner-iteration preconditioners.

One inner step is ``z <- M^{-1} (N z + v)``.  Starting from ``z = 0``,
``ell`` steps apply ``C_ell = sum_{i<ell} H^i M^{-1}`` with ``H = M^{-1} N``.

Available splittings: Jacobi, Gauss-Seidel, SOR, SSOR, generalized shifted
splitting (GSS) for ``[[C, B^T], [-B, 0]]`` and Hermitian/skew-Hermitian
splitting (HSS), plus inexact GSS/HSS whose shifted systems are solved by
inner Krylov iterations to a loose tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import matcore
from .krylov import InnerSolveError, Preconditioner, cg, gmres, lsqr

__all__ = [
    "Splitting",
    "ClassicSplitting",
    "GSSSplitting",
    "HSSSplitting",
    "InnerRunReport",
    "InnerIterationPreconditioner",
    "classic_build",
    "gss_build",
    "igss_build",
    "hss_build",
    "ihss_build",
    "saddle_matrix",
    "default_gss_beta",
    "apply_Cl",
    "stationary_run",
    "iteration_matrix",
    "preconditioner_matrix",
]


class Splitting:
    """Base class.  Subclasses implement :meth:`step` and the dense views."""

    kind = "abstract"
    exact = True

    def __init__(self, A):
        self.A = matcore.as_csr(A)
        self.n = self.A.shape[0]

    def step(self, z: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def M_dense(self) -> np.ndarray:
        raise NotImplementedError

    def N_dense(self) -> np.ndarray:
        return self.M_dense() - self.A.toarray()

    def H_dense(self) -> np.ndarray:
        """Iteration matrix ``M^{-1} N``."""
        return np.linalg.solve(self.M_dense(), self.N_dense())

    def descriptor(self) -> dict:
        return {"kind": self.kind}

    def __repr__(self):
        params = ", ".join(f"{k}={v}" for k, v in self.descriptor().items() if k != "kind")
        return f"{type(self).__name__}({self.kind}{', ' + params if params else ''})"


def _triangular_solver(M: sp.csr_matrix, lower: bool):
    M = M.tocsr()

    def solve(v):
        return spla.spsolve_triangular(M, v, lower=lower)

    return solve


class ClassicSplitting(Splitting):
    """Jacobi, Gauss-Seidel, SOR(omega) and SSOR(omega).

    With ``A = L + D + U`` (strictly lower, diagonal, strictly upper):
    Jacobi ``M = D``; SOR ``M = D/omega + L`` (Gauss-Seidel is omega = 1);
    SSOR is a forward SOR sweep followed by a backward one.
    """

    def __init__(self, A, kind: str, omega: float = 1.0):
        super().__init__(A)
        if kind not in ("jacobi", "gauss-seidel", "sor", "ssor"):
            raise ValueError(f"unknown classic splitting {kind!r}")
        d = self.A.diagonal()
        if np.any(d == 0.0):
            raise ValueError(f"{kind} splitting needs a zero-free diagonal")
        if kind in ("sor", "ssor") and not 0.0 < omega < 2.0:
            raise ValueError("omega must lie in (0, 2)")
        if kind in ("jacobi", "gauss-seidel"):
            omega = 1.0
        self.kind = kind
        self.omega = float(omega)
        self.d = d
        L = sp.tril(self.A, k=-1, format="csr")
        U = sp.triu(self.A, k=1, format="csr")
        Dw = sp.diags(d / self.omega)
        self._Mf = matcore.as_csr(Dw + L)
        self._Mb = matcore.as_csr(Dw + U)
        self._Nf = matcore.as_csr(self._Mf - self.A)
        self._Nb = matcore.as_csr(self._Mb - self.A)
        self._solve_f = _triangular_solver(self._Mf, lower=True)
        self._solve_b = _triangular_solver(self._Mb, lower=False)
        if kind == "jacobi":
            self._Nf = matcore.as_csr(sp.diags(d) - self.A)

    def step(self, z, v):
        if self.kind == "jacobi":
            return (self._Nf @ z + v) / self.d
        z = self._solve_f(self._Nf @ z + v)
        if self.kind == "ssor":
            z = self._solve_b(self._Nb @ z + v)
        return z

    def M_dense(self):
        if self.kind == "jacobi":
            return np.diag(self.d)
        if self.kind in ("gauss-seidel", "sor"):
            return self._Mf.toarray()
        w = self.omega
        return self._Mf.toarray() @ np.diag(w / ((2.0 - w) * self.d)) @ self._Mb.toarray()

    def descriptor(self):
        out = {"kind": self.kind}
        if self.kind in ("sor", "ssor"):
            out["omega"] = self.omega
        return out


def saddle_matrix(C, B) -> sp.csr_matrix:
    """Assemble ``[[C, B^T], [-B, 0]]`` for ``C`` p x p and ``B`` q x p."""
    C = sp.csr_matrix(C)
    B = sp.csr_matrix(B)
    q = B.shape[0]
    return matcore.as_csr(sp.bmat([[C, B.T], [-B, sp.csr_matrix((q, q))]]))


def default_gss_beta(C, B) -> float:
    """``||B||^2 / ||C||`` with spectral norms."""
    return matcore.norm2(B) ** 2 / matcore.norm2(C)


class GSSSplitting(Splitting):
    """Generalized shifted splitting of ``A = [[C, B^T], [-B, 0]]``.

    ``M = 1/2 [[alpha I + C, B^T], [-B, beta I]]`` and ``N = M - A``.  The
    exact variant factors M once (dense LU); the inexact variant solves
    each M-system by unpreconditioned GMRES to relative residual
    ``inner_tol``.
    """

    def __init__(self, C, B, alpha: float, beta: float, inner_tol: float | None = None,
                 inner_maxit: int | None = None):
        if not (alpha > 0 and beta > 0):
            raise ValueError("GSS needs alpha > 0 and beta > 0")
        C = matcore.as_csr(C)
        B = matcore.as_csr(B)
        p, q = C.shape[0], B.shape[0]
        if C.shape != (p, p) or B.shape[1] != p:
            raise ValueError(f"incompatible blocks C {C.shape}, B {B.shape}")
        super().__init__(saddle_matrix(C, B))
        self.C, self.B = C, B
        self.alpha, self.beta = float(alpha), float(beta)
        self.M = matcore.as_csr(
            0.5 * sp.bmat([[alpha * sp.identity(p) + C, B.T], [-B, beta * sp.identity(q)]])
        )
        self.N = matcore.as_csr(self.M - self.A)
        self.inner_tol = inner_tol
        self.inner_maxit = self.n if inner_maxit is None else int(inner_maxit)
        if inner_tol is None:
            self.kind = "gss"
            self.factorization = matcore.lu_factor(self.M.toarray())
        else:
            self.kind = "igss"
            self.exact = False
            self.factorization = None

    def solve_M(self, rhs):
        if self.factorization is not None:
            return matcore.fact_solve(self.factorization, rhs)
        rep = gmres(self.M, rhs, tol=self.inner_tol, maxit=self.inner_maxit)
        if not rep.solved:
            raise InnerSolveError(
                f"inner GMRES for the GSS shift system stopped with {rep.termination.value}",
                rep.outer_iterations,
            )
        return rep.x

    def step(self, z, v):
        return self.solve_M(self.N @ z + v)

    def M_dense(self):
        return self.M.toarray()

    def N_dense(self):
        return self.N.toarray()

    def descriptor(self):
        out = {"kind": self.kind, "alpha": self.alpha, "beta": self.beta}
        if self.inner_tol is not None:
            out["inner_tol"] = self.inner_tol
            out["inner_maxit"] = self.inner_maxit
        return out


class HSSSplitting(Splitting):
    """Hermitian/skew-Hermitian splitting with shift ``alpha``.

    One inner step is the two half-steps::

        (alpha I + Hs) z' = (alpha I - Ss) z + v
        (alpha I + Ss) z+ = (alpha I - Hs) z' + v

    where ``Hs = (A + A^T)/2`` and ``Ss = (A - A^T)/2``.  Exact HSS uses a
    Cholesky factor for the first system and LU for the second; the
    inexact variant uses CG and LSQR from a zero start.
    """

    def __init__(self, A, alpha: float, inner_tol: float | None = None, inner_maxit: int | None = None):
        if not alpha > 0:
            raise ValueError("HSS needs alpha > 0")
        super().__init__(A)
        n = self.n
        self.alpha = float(alpha)
        self.Hs = matcore.as_csr(0.5 * (self.A + self.A.T))
        self.Ss = matcore.as_csr(0.5 * (self.A - self.A.T))
        I = sp.identity(n, format="csr")
        self.shift_H = matcore.as_csr(alpha * I + self.Hs)
        self.shift_S = matcore.as_csr(alpha * I + self.Ss)
        self.rhs_H = matcore.as_csr(alpha * I - self.Hs)
        self.rhs_S = matcore.as_csr(alpha * I - self.Ss)
        self.inner_tol = inner_tol
        self.inner_maxit = n if inner_maxit is None else int(inner_maxit)
        if inner_tol is None:
            self.kind = "hss"
            self.chol = matcore.chol_factor(self.shift_H.toarray())
            self.lu = matcore.lu_factor(self.shift_S.toarray())
        else:
            self.kind = "ihss"
            self.exact = False
            self.chol = self.lu = None

    def _solve_H(self, rhs):
        if self.chol is not None:
            return matcore.fact_solve(self.chol, rhs)
        x, its, ok = cg(self.shift_H, rhs, self.inner_tol, self.inner_maxit)
        if not ok:
            raise InnerSolveError(f"CG did not reach relative residual {self.inner_tol} in {its} steps", its)
        return x

    def _solve_S(self, rhs):
        if self.lu is not None:
            return matcore.fact_solve(self.lu, rhs)
        x, its, ok = lsqr(self.shift_S, rhs, self.inner_tol, self.inner_maxit)
        if not ok:
            raise InnerSolveError(f"LSQR did not reach relative residual {self.inner_tol} in {its} steps", its)
        return x

    def step(self, z, v):
        half = self._solve_H(self.rhs_S @ z + v)
        return self._solve_S(self.rhs_H @ half + v)

    def M_dense(self):
        return self.shift_H.toarray() @ self.shift_S.toarray() / (2.0 * self.alpha)

    def H_dense(self):
        left = np.linalg.solve(self.shift_S.toarray(), self.rhs_H.toarray())
        right = np.linalg.solve(self.shift_H.toarray(), self.rhs_S.toarray())
        return left @ right

    def descriptor(self):
        out = {"kind": self.kind, "alpha": self.alpha}
        if self.inner_tol is not None:
            out["inner_tol"] = self.inner_tol
            out["inner_maxit"] = self.inner_maxit
        return out


def classic_build(A, kind: str, omega: float = 1.0) -> ClassicSplitting:
    return ClassicSplitting(A, kind, omega)


def gss_build(C, B, alpha: float, beta: float | None = None) -> GSSSplitting:
    if beta is None:
        beta = default_gss_beta(C, B)
    return GSSSplitting(C, B, alpha, beta)


def igss_build(C, B, alpha: float, beta: float | None = None, inner_tol: float = 1e-1,
               inner_maxit: int | None = None) -> GSSSplitting:
    if beta is None:
        beta = default_gss_beta(C, B)
    return GSSSplitting(C, B, alpha, beta, inner_tol=inner_tol, inner_maxit=inner_maxit)


def hss_build(A, alpha: float) -> HSSSplitting:
    return HSSSplitting(A, alpha)


def ihss_build(A, alpha: float, inner_tol: float = 1e-1, inner_maxit: int | None = None) -> HSSSplitting:
    return HSSSplitting(A, alpha, inner_tol=inner_tol, inner_maxit=inner_maxit)


# Running the iteration --------------------------------------------------------


@dataclass
class InnerRunReport:
    z: np.ndarray
    steps_used: int
    relative_difference: float
    final_inner_residual: float


def apply_Cl(s: Splitting, v, ell: int) -> np.ndarray:
    """``ell`` inner steps on ``A z = v`` from ``z = 0``."""
    v = np.asarray(v, dtype=float)
    z = np.zeros_like(v)
    for _ in range(ell):
        z = s.step(z, v)
    return z


def stationary_run(s: Splitting, b, z0=None, steps: int = 1) -> InnerRunReport:
    """Plain stationary iteration for ``A z = b``.

    Reports the last relative difference ``||z_{i-1} - z_i|| / ||z_i||``
    and the final relative residual.
    """
    b = np.asarray(b, dtype=float)
    z = np.zeros_like(b) if z0 is None else np.asarray(z0, dtype=float).copy()
    diff = np.nan
    for _ in range(steps):
        z_new = s.step(z, b)
        nz = np.linalg.norm(z_new)
        diff = np.linalg.norm(z - z_new) / nz if nz > 0 else np.inf
        z = z_new
    bn = np.linalg.norm(b)
    res = np.linalg.norm(b - s.A @ z) / bn if bn > 0 else 0.0
    return InnerRunReport(z, steps, float(diff), float(res))


class InnerIterationPreconditioner(Preconditioner):
    """Preconditioner made of inner iterations of a splitting.

    ``apply`` runs a fixed ``ell`` steps; ``apply_adaptive`` keeps stepping
    until ``||v - A z|| < target``.
    """

    def __init__(self, splitting: Splitting, ell: int = 1):
        self.splitting = splitting
        self.ell = int(ell)
        self.linear = splitting.exact

    def apply(self, v):
        return apply_Cl(self.splitting, v, self.ell)

    def apply_adaptive(self, v, target, cap):
        s = self.splitting
        z = np.zeros_like(v)
        for count in range(1, cap + 1):
            try:
                z = s.step(z, v)
            except InnerSolveError as exc:
                exc.iterations = count
                raise
            if np.linalg.norm(v - s.A @ z) < target:
                return z, count, True
        return z, cap, False


def iteration_matrix(s: Splitting) -> np.ndarray:
    return s.H_dense()


def preconditioner_matrix(s: Splitting, ell: int) -> np.ndarray:
    """Dense ``C_ell = sum_{i<ell} H^i M^{-1}``."""
    H = s.H_dense()
    Minv = np.linalg.inv(s.M_dense())
    S = np.eye(s.n)
    P = np.eye(s.n)
    for _ in range(ell - 1):
        P = P @ H
        S = S + P
    return S @ Minv
