"""Matrix primitives shared by the solvers, splittings and generators.

Dense matrices are plain 2-D ``numpy`` arrays and sparse matrices are
``scipy.sparse`` CSR matrices.  The helpers here add the few things the
rest of the package needs on top of that: structured constructors,
factorizations with explicit failure modes, random Givens products and
Matrix Market I/O.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = [
    "FactorizationError",
    "SingularFactorizationError",
    "NotSPDError",
    "Factorization",
    "as_csr",
    "to_dense",
    "matvec",
    "tridiag",
    "kron",
    "kron_sum",
    "direct_sum",
    "lu_factor",
    "chol_factor",
    "fact_solve",
    "make_rng",
    "apply_random_givens",
    "random_givens_orthogonal",
    "numerical_rank",
    "norm2",
    "read_matrix",
    "write_matrix",
    "read_vector",
    "write_vector",
]

# Rank threshold relative to the largest singular value.
RANK_RTOL = 1e-10


class FactorizationError(ValueError):
    """A matrix could not be factored."""


class SingularFactorizationError(FactorizationError):
    pass


class NotSPDError(FactorizationError):
    pass


def as_csr(A) -> sp.csr_matrix:
    """Return ``A`` as a canonical CSR matrix without explicit zeros."""
    M = sp.csr_matrix(A, dtype=float, copy=True)
    M.sum_duplicates()
    M.eliminate_zeros()
    M.sort_indices()
    return M


def to_dense(A) -> np.ndarray:
    if sp.issparse(A):
        return A.toarray()
    return np.array(A, dtype=float)


def matvec(A, x) -> np.ndarray:
    """Compute ``A @ x`` with row-sequential accumulation.

    Sparse matrices use the CSR kernel, which sums the stored entries of
    each row left to right.  Dense matrices are summed the same way, so a
    sparse matrix and its dense copy give bitwise identical products.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, x has shape {x.shape}")
    if sp.issparse(A):
        return sp.csr_matrix(A) @ x
    A = np.asarray(A, dtype=float)
    if A.shape[1] == 0:
        return np.zeros(A.shape[0])
    return np.cumsum(A * x, axis=1)[:, -1]


def tridiag(n: int, sub: float, diag: float, sup: float) -> sp.csr_matrix:
    """n x n tridiagonal matrix with constant sub-, main and super-diagonal."""
    return as_csr(
        sp.diags(
            [np.full(n - 1, sub), np.full(n, diag), np.full(n - 1, sup)],
            [-1, 0, 1],
            shape=(n, n),
        )
    )


def kron(A, B) -> sp.csr_matrix:
    return as_csr(sp.kron(sp.csr_matrix(A), sp.csr_matrix(B)))


def kron_sum(A, B) -> sp.csr_matrix:
    """Kronecker sum ``kron(A, I) + kron(I, B)`` of two square matrices."""
    if A.shape[0] != A.shape[1] or B.shape[0] != B.shape[1]:
        raise ValueError("kron_sum needs square operands")
    Ia = sp.identity(A.shape[0], format="csr")
    Ib = sp.identity(B.shape[0], format="csr")
    return as_csr(sp.kron(sp.csr_matrix(A), Ib) + sp.kron(Ia, sp.csr_matrix(B)))


def direct_sum(*blocks) -> sp.csr_matrix:
    """Block-diagonal stacking of (possibly rectangular) matrices."""
    return as_csr(sp.block_diag([sp.csr_matrix(b) for b in blocks]))


@dataclass(frozen=True)
class Factorization:
    """A dense LU (partial pivoting) or Cholesky factorization.

    ``factors`` holds the LAPACK-packed factor and ``perm`` the pivot
    indices (empty for Cholesky).
    """

    kind: str
    factors: np.ndarray
    perm: np.ndarray
    lower: bool = False

    @property
    def n(self) -> int:
        return self.factors.shape[0]

    def solve(self, v) -> np.ndarray:
        return fact_solve(self, v)


def lu_factor(M) -> Factorization:
    M = to_dense(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("lu_factor needs a square matrix")
    normM = np.abs(M).sum(axis=1).max() if M.size else 0.0
    with warnings.catch_warnings():
        # singular pivots are reported below as an exception
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(M, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if M.shape[0] and pivots.min() <= 1e-14 * normM:
        k = int(np.argmin(pivots))
        raise SingularFactorizationError(f"pivot {k} is {pivots[k]:.3e}, matrix is numerically singular")
    lu.setflags(write=False)
    piv.setflags(write=False)
    return Factorization("lu", lu, piv)


def chol_factor(M) -> Factorization:
    M = to_dense(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("chol_factor needs a square matrix")
    scale = max(np.abs(M).max(), 1.0) if M.size else 1.0
    if np.abs(M - M.T).max(initial=0.0) > 1e-12 * scale:
        raise NotSPDError("matrix is not symmetric")
    try:
        c, lower = sla.cho_factor(M, lower=False, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(str(exc)) from None
    c.setflags(write=False)
    return Factorization("cholesky", c, np.empty(0, dtype=np.int32), lower)


def fact_solve(F: Factorization, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if F.kind == "lu":
        return sla.lu_solve((F.factors, F.perm), v, check_finite=False)
    if F.kind == "cholesky":
        return sla.cho_solve((F.factors, F.lower), v, check_finite=False)
    raise ValueError(f"unknown factorization kind {F.kind!r}")


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; the stream for a given integer seed is platform independent."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def apply_random_givens(Q: np.ndarray, num_rotations: int, rng: np.random.Generator) -> np.ndarray:
    """Left-multiply ``Q`` in place by ``num_rotations`` random Givens rotations.

    Each rotation acts on a uniformly drawn index pair i < j with an angle
    uniform in [0, 2*pi).
    """
    n = Q.shape[0]
    for _ in range(num_rotations):
        i, j = np.sort(rng.choice(n, size=2, replace=False))
        theta = rng.uniform(0.0, 2.0 * np.pi)
        c, s = np.cos(theta), np.sin(theta)
        qi = Q[i].copy()
        qj = Q[j]
        Q[i] = c * qi - s * qj
        Q[j] = s * qi + c * qj
    return Q


def random_givens_orthogonal(n: int, num_rotations: int, seed=0) -> np.ndarray:
    if n < 2:
        raise ValueError("need n >= 2")
    return apply_random_givens(np.eye(n), num_rotations, make_rng(seed))


def numerical_rank(A, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(to_dense(A), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def norm2(A) -> float:
    """Spectral norm (largest singular value), computed densely."""
    A = to_dense(A)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


# Matrix Market I/O -------------------------------------------------------


def write_matrix(path, A, symmetric: bool = False, comment: str = "") -> None:
    """Write a matrix; sparse input uses coordinate format, dense input array format."""
    symmetry = "symmetric" if symmetric else "general"
    if sp.issparse(A):
        scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, field="real", symmetry=symmetry)
    else:
        scipy.io.mmwrite(str(path), np.asarray(A, dtype=float), comment=comment, field="real", symmetry=symmetry)


def read_matrix(path):
    """Read a Matrix Market file: coordinate files come back as CSR, array files dense."""
    M = scipy.io.mmread(str(path))
    if sp.issparse(M):
        return as_csr(M)
    return np.asarray(M, dtype=float)


def write_vector(path, v, comment: str = "") -> None:
    v = np.asarray(v, dtype=float).reshape(-1, 1)
    scipy.io.mmwrite(str(path), v, comment=comment, field="real")


def read_vector(path) -> np.ndarray:
    M = scipy.io.mmread(str(Path(path)))
    if sp.issparse(M):
        M = M.toarray()
    M = np.asarray(M, dtype=float)
    if M.ndim == 2 and M.shape[1] != 1:
        raise ValueError(f"{path}: expected a single column, got shape {M.shape}")
    return M.reshape(-1)
