"""Right-preconditioned GMRES and flexible GMRES.

Both solvers share one Arnoldi loop (modified Gram-Schmidt, Givens
rotations on the Hessenberg matrix, no restarts).  The iterate is always
assembled from the stored preconditioned directions ``z_k``::

    x_m = x_0 + [z_1, ..., z_m] y_m

so the same code serves a fixed preconditioner, no preconditioner
(``z_k = v_k``) and a preconditioner that changes between outer steps.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.linalg import blas

log = logging.getLogger(__name__)

__all__ = [
    "Termination",
    "NumericalFailure",
    "InnerSolveError",
    "Preconditioner",
    "CallablePreconditioner",
    "KrylovState",
    "SolveReport",
    "arnoldi_step",
    "gmres",
    "gmres_inner",
    "fgmres",
    "write_trace_csv",
    "cg",
    "lsqr",
]

# h_{k+1,k} counts as zero below this multiple of ||A||_inf * ||z_k||.
BREAKDOWN_RTOL = 1e-14


class Termination(str, Enum):
    CONVERGED = "converged"
    HAPPY_BREAKDOWN = "happy-breakdown-with-solution"
    BREAKDOWN = "breakdown-without-solution"
    MAX_ITERATIONS = "max-iterations"


class NumericalFailure(ArithmeticError):
    """NaN or Inf appeared in the Arnoldi process."""

    def __init__(self, step: int, what: str):
        super().__init__(f"non-finite {what} at outer step {step}")
        self.step = step


class InnerSolveError(RuntimeError):
    """An inner solver did not reach its tolerance within its iteration cap."""

    def __init__(self, message: str, iterations: int = 0):
        super().__init__(message)
        self.iterations = iterations


class Preconditioner:
    """Interface used by the outer solvers.

    ``apply`` is the fixed operator used by :func:`gmres`.
    ``apply_adaptive`` runs inner iterations on ``A z = v`` until
    ``||v - A z|| < target`` and is used by :func:`fgmres`; it returns the
    iterate, the number of inner iterations and whether the target was met.
    """

    #: False for inexact variants whose action is not a fixed linear map.
    linear = True

    def apply(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_adaptive(self, v: np.ndarray, target: float, cap: int) -> tuple[np.ndarray, int, bool]:
        raise NotImplementedError(f"{type(self).__name__} has no adaptive mode")


class CallablePreconditioner(Preconditioner):
    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], linear: bool = True):
        self.fn = fn
        self.linear = linear

    def apply(self, v):
        return self.fn(v)


@dataclass
class KrylovState:
    """Storage for one Arnoldi run.

    Rows of ``V`` and ``Z`` hold the basis and the preconditioned
    directions.  ``H`` is the raw Hessenberg matrix and ``R`` its rotated
    (upper triangular) copy; ``g`` is the rotated right-hand side that
    starts as ``beta * e_1``.
    """

    V: np.ndarray
    Z: np.ndarray
    H: np.ndarray
    R: np.ndarray
    cs: np.ndarray
    sn: np.ndarray
    g: np.ndarray
    beta: float
    k: int = 0

    @classmethod
    def start(cls, r0: np.ndarray, maxit: int, separate_z: bool = True) -> "KrylovState":
        n = r0.shape[0]
        beta = float(np.linalg.norm(r0))
        V = np.zeros((maxit + 1, n))
        V[0] = r0 / beta
        Z = np.zeros((maxit, n)) if separate_z else V
        g = np.zeros(maxit + 1)
        g[0] = beta
        return cls(
            V=V,
            Z=Z,
            H=np.zeros((maxit + 1, maxit)),
            R=np.zeros((maxit + 1, maxit)),
            cs=np.zeros(maxit),
            sn=np.zeros(maxit),
            g=g,
            beta=beta,
        )

    def basis(self) -> np.ndarray:
        """Current orthonormal basis as columns (n x (k+1))."""
        return self.V[: self.k + 1].T

    def hessenberg(self) -> np.ndarray:
        return self.H[: self.k + 1, : self.k]

    def solve_small(self, m: int, abs_tol: float = 0.0) -> np.ndarray:
        """Minimise ||beta e_1 - H_{m+1,m} y||.

        Singular values of ``H_{m+1,m}`` at or below ``abs_tol`` are
        treated as zero (minimum-norm solution).
        """
        R = self.R[:m, :m]
        d = np.abs(np.diag(R))
        if m and d.min() > max(abs_tol, 1e-14 * d.max()):
            return sla.solve_triangular(R, self.g[:m], lower=False, check_finite=False)
        rhs = np.zeros(m + 1)
        rhs[0] = self.beta
        U, sv, Vt = np.linalg.svd(self.H[: m + 1, :m], full_matrices=False)
        cut = max(abs_tol, 1e-14 * (sv[0] if sv.size else 0.0))
        keep = sv > cut
        return Vt[keep].T @ ((U[:, keep].T @ rhs) / sv[keep])

    def iterate(self, x0: np.ndarray, m: int, abs_tol: float = 0.0) -> np.ndarray:
        if m == 0:
            return x0.copy()
        return x0 + self.Z[:m].T @ self.solve_small(m, abs_tol)


def arnoldi_step(state: KrylovState, w: np.ndarray, reorthogonalize: bool = False):
    """Orthogonalize ``w`` against ``v_1..v_{k+1}`` by modified Gram-Schmidt.

    ``w`` is overwritten with the orthogonalized vector.  Returns the new
    Hessenberg column (length k+1) and ``h_{k+2,k+1} = ||w||``; appending
    the next basis vector is left to the caller.
    """
    k = state.k
    h = np.zeros(k + 1)
    ddot, daxpy = blas.ddot, blas.daxpy
    V = state.V
    for i in range(k + 1):
        hi = ddot(V[i], w)
        h[i] = hi
        daxpy(V[i], w, a=-hi)
    if reorthogonalize:
        for i in range(k + 1):
            hi = ddot(V[i], w)
            h[i] += hi
            daxpy(V[i], w, a=-hi)
    return h, float(np.linalg.norm(w))


@dataclass
class SolveReport:
    x: np.ndarray
    outer_iterations: int
    relative_residual: float
    termination: Termination
    inner_iteration_counts: list[int] = field(default_factory=list)
    residual_history: list[float] = field(default_factory=list)
    true_residual_history: list[float] = field(default_factory=list)
    inner_failure: bool = False
    failed_step: int | None = None
    message: str = ""
    state: KrylovState | None = None

    @property
    def solved(self) -> bool:
        return self.termination in (Termination.CONVERGED, Termination.HAPPY_BREAKDOWN)


def _givens(a: float, b: float) -> tuple[float, float, float]:
    d = float(np.hypot(a, b))
    if d == 0.0:
        return 1.0, 0.0, 0.0
    return a / d, b / d, d


def _inf_norm(A) -> float:
    if hasattr(A, "tocsr"):
        return float(abs(A).sum(axis=1).max()) if A.shape[0] else 0.0
    return float(np.abs(np.asarray(A)).sum(axis=1).max()) if len(A) else 0.0


def _outer_loop(A, b, x0, tol, maxit, direction, *, separate_z, reorthogonalize, track_true_residual, keep_state):
    """Shared Arnoldi/Givens loop.

    ``direction(k, v_k, state)`` returns ``(z_k, inner_count)``; it may
    raise :class:`InnerSolveError`, which ends the run as a breakdown with
    ``inner_failure`` set.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"A has shape {A.shape}, expected ({n}, {n})")
    if not tol > 0:
        raise ValueError("tol must be positive")
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    maxit = n if maxit is None else int(maxit)

    r0 = b - A @ x0
    beta = float(np.linalg.norm(r0))
    if beta == 0.0:
        return SolveReport(x0, 0, 0.0, Termination.CONVERGED, residual_history=[0.0])
    state = KrylovState.start(r0, maxit, separate_z=separate_z)
    normA = _inf_norm(A)
    history = [beta]
    true_history = [beta] if track_true_residual else []
    inner_counts: list[int] = []

    zscale = [0.0]

    def finish(m, termination, **extra):
        x = state.iterate(x0, m, BREAKDOWN_RTOL * normA * zscale[0])
        rel = float(np.linalg.norm(b - A @ x)) / beta
        return SolveReport(
            x=x,
            outer_iterations=m,
            relative_residual=rel,
            termination=termination,
            inner_iteration_counts=inner_counts,
            residual_history=history,
            true_residual_history=true_history,
            state=state if keep_state else None,
            **extra,
        )

    for k in range(maxit):
        state.k = k
        v = state.V[k]
        try:
            z, count = direction(k, v, state)
        except InnerSolveError as exc:
            log.info("inner solve failed at outer step %d: %s", k + 1, exc)
            if exc.iterations:
                inner_counts.append(exc.iterations)
            return finish(
                k, Termination.BREAKDOWN, inner_failure=True, failed_step=k + 1, message=str(exc)
            )
        if count is not None:
            inner_counts.append(count)
        if separate_z:
            if not np.all(np.isfinite(z)):
                raise NumericalFailure(k + 1, "preconditioned vector")
            state.Z[k] = z
        znorm = float(np.linalg.norm(z))
        zscale[0] = max(zscale[0], znorm)
        w = A @ z
        h, hnext = arnoldi_step(state, w, reorthogonalize)
        if not (np.all(np.isfinite(h)) and np.isfinite(hnext)):
            raise NumericalFailure(k + 1, "Hessenberg entry")
        state.H[: k + 1, k] = h
        state.H[k + 1, k] = hnext
        state.k = k + 1

        col = state.R[:, k]
        col[: k + 2] = state.H[: k + 2, k]
        for i in range(k):
            c, s = state.cs[i], state.sn[i]
            col[i], col[i + 1] = c * col[i] + s * col[i + 1], -s * col[i] + c * col[i + 1]
        c, s, d = _givens(col[k], col[k + 1])
        state.cs[k], state.sn[k] = c, s
        col[k], col[k + 1] = d, 0.0
        state.g[k + 1] = -s * state.g[k]
        state.g[k] = c * state.g[k]
        res = abs(state.g[k + 1])
        history.append(res)
        if track_true_residual:
            true_history.append(float(np.linalg.norm(b - A @ state.iterate(x0, k + 1))))

        broke = hnext <= BREAKDOWN_RTOL * normA * znorm
        if broke:
            report = finish(k + 1, Termination.HAPPY_BREAKDOWN)
            if report.relative_residual > tol:
                report.termination = Termination.BREAKDOWN
                report.failed_step = k + 1
            return report
        state.V[k + 1] = w / hnext
        if res <= tol * beta:
            report = finish(k + 1, Termination.CONVERGED)
            if report.relative_residual <= tol:
                return report
            log.debug("recurrence residual met tol at step %d but explicit residual %.3e did not",
                      k + 1, report.relative_residual)
    return finish(maxit, Termination.MAX_ITERATIONS)


def gmres(A, b, P=None, x0=None, tol: float = 1e-6, maxit: int | None = None, *,
          reorthogonalize: bool = False, track_true_residual: bool = False,
          keep_state: bool = False) -> SolveReport:
    """GMRES with optional fixed right preconditioner ``P``.

    ``P`` may be a :class:`Preconditioner`, a callable ``v -> z`` or None.
    Stops when ``||b - A x_k|| <= tol ||r_0||`` (checked on the Givens
    recurrence, then re-verified explicitly), on breakdown, or after
    ``maxit`` steps (default ``n``).
    """
    if P is None:
        def direction(k, v, state):
            return v, None
        separate = False
    else:
        apply = P.apply if isinstance(P, Preconditioner) else P

        def direction(k, v, state):
            return apply(v), None
        separate = True
    return _outer_loop(A, b, x0, tol, maxit, direction, separate_z=separate,
                       reorthogonalize=reorthogonalize, track_true_residual=track_true_residual,
                       keep_state=keep_state)


def gmres_inner(A, b, splitting, ell: int, x0=None, tol: float = 1e-6, maxit: int | None = None,
                **kwargs) -> SolveReport:
    """GMRES preconditioned by ``ell`` inner stationary steps of ``splitting``."""
    from .splittings import InnerIterationPreconditioner

    if ell < 1:
        raise ValueError("ell must be >= 1")
    P = InnerIterationPreconditioner(splitting, ell)
    report = gmres(A, b, P, x0=x0, tol=tol, maxit=maxit, **kwargs)
    report.inner_iteration_counts = [ell] * report.outer_iterations
    return report


def fgmres(A, b, P: Preconditioner, x0=None, tol: float = 1e-6, maxit: int | None = None,
           inner_cap: int | None = None, *, reorthogonalize: bool = False,
           track_true_residual: bool = False, keep_state: bool = False) -> SolveReport:
    """Flexible GMRES with an adaptive number of inner iterations.

    At outer step k the inner iterations run until
    ``||v_k - A z_k|| < |c_{k-1}|``, the cosine of the previous Givens
    rotation (``c_0 = 1``).  If that is not reached within ``inner_cap``
    inner iterations (default ``n``) the run stops as a breakdown with
    ``inner_failure`` set and ``failed_step`` = k.
    """
    n = np.asarray(b).shape[0]
    cap = n if inner_cap is None else int(inner_cap)

    def direction(k, v, state):
        target = abs(state.cs[k - 1]) if k > 0 else 1.0
        z, count, reached = P.apply_adaptive(v, target, cap)
        if not reached:
            raise InnerSolveError(
                f"inner iterations did not reach ||v - A z|| < {target:.3e} within {cap} steps", count
            )
        return z, count

    return _outer_loop(A, b, x0, tol, maxit, direction, separate_z=True,
                       reorthogonalize=reorthogonalize, track_true_residual=track_true_residual,
                       keep_state=keep_state)


def write_trace_csv(report: SolveReport, path) -> None:
    """Per-iteration trace: step, residual norm (recurrence), inner count."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "residual_norm", "inner_iterations"])
        for k, r in enumerate(report.residual_history):
            inner = report.inner_iteration_counts[k - 1] if 0 < k <= len(report.inner_iteration_counts) else ""
            w.writerow([k, repr(float(r)), inner])


def cg(A, b, tol: float, maxit: int):
    """Conjugate gradients from zero; stops on ``||b - A x|| <= tol ||b||``.

    Returns ``(x, iterations, converged)``.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x, 0, True
    p = r.copy()
    rr = float(r @ r)
    for it in range(1, maxit + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            return x, it, False
        a = rr / pAp
        x += a * p
        r -= a * Ap
        rr_new = float(r @ r)
        if np.sqrt(rr_new) <= tol * bnorm:
            return x, it, True
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, maxit, False


def lsqr(A, b, tol: float, maxit: int):
    """LSQR (Golub-Kahan bidiagonalization) from zero.

    Stops when the residual estimate satisfies ``||b - A x|| <= tol ||b||``.
    Returns ``(x, iterations, converged)``.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros(A.shape[1])
    beta = float(np.linalg.norm(b))
    if beta == 0.0:
        return x, 0, True
    bnorm = beta
    u = b / beta
    v = A.T @ u
    alpha = float(np.linalg.norm(v))
    if alpha == 0.0:
        return x, 0, False
    v = v / alpha
    w = v.copy()
    phibar, rhobar = beta, alpha
    for it in range(1, maxit + 1):
        u = A @ v - alpha * u
        beta = float(np.linalg.norm(u))
        if beta > 0.0:
            u /= beta
        v = A.T @ u - beta * v
        alpha = float(np.linalg.norm(v))
        if alpha > 0.0:
            v /= alpha
        rho = float(np.hypot(rhobar, beta))
        c, s = rhobar / rho, beta / rho
        theta = s * alpha
        rhobar = -c * alpha
        phi = c * phibar
        phibar = s * phibar
        x += (phi / rho) * w
        w = v - (theta / rho) * w
        if abs(phibar) <= tol * bnorm:
            return x, it, True
        if alpha == 0.0 or beta == 0.0:
            return x, it, abs(phibar) <= tol * bnorm
    return x, maxit, False
