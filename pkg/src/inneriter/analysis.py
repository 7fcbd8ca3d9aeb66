"""Spectral and structural analysis of splittings and singular matrices.

Everything here is dense and meant for desk-scale matrices: eigenvalues of
iteration matrices, semiconvergence and group-matrix tests, the index of a
matrix, the eigenvalue disk of ``A C_ell``, the residual bound for
diagonalizable ``A C_ell``, the alpha grid search, the inner-count rule and
a few fixture builders used by the property tests.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .krylov import gmres_inner
from .matcore import RANK_RTOL, make_rng, numerical_rank, to_dense
from .splittings import Splitting, preconditioner_matrix

__all__ = [
    "TOL_ONE",
    "EIG_BUDGET",
    "BudgetExceeded",
    "IndexStabilizationError",
    "NotDiagonalizableError",
    "SpectralReport",
    "IndexReport",
    "DiskReport",
    "BoundReport",
    "AlphaSweep",
    "PlantedIndexFixture",
    "spectral_report",
    "gp_test",
    "gp_test_subspaces",
    "index_of",
    "disk_check",
    "bound_evaluate",
    "estimate_alpha_grid",
    "select_inner_count",
    "appendix_fixture",
    "krylov_inclusion",
    "inner_sum_checks",
    "log_grid",
    "sweep_to_text",
    "report_to_csv",
    "report_to_text",
]

TOL_ONE = 1e-8
EIG_BUDGET = 1500


class BudgetExceeded(RuntimeError):
    """The matrix is larger than the dense eigensolve budget."""


class IndexStabilizationError(RuntimeError):
    def __init__(self, rank_sequence):
        super().__init__(f"rank sequence did not stabilize: {rank_sequence}")
        self.rank_sequence = list(rank_sequence)


class NotDiagonalizableError(RuntimeError):
    """Eigenvector matrix too ill conditioned to treat the matrix as diagonalizable."""


def _check_budget(n: int, budget: int | None) -> None:
    if budget is not None and n > budget:
        raise BudgetExceeded(f"n = {n} exceeds the dense eigensolve budget {budget}")


# Spectral report ---------------------------------------------------------------


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    rho: float
    nu: float
    semiconvergent: bool
    one_algebraic: int
    one_geometric: int
    one_semisimple: bool
    tol_one: float
    tol_rank: float

    @property
    def one_multiplicity(self) -> tuple[int, int]:
        return self.one_algebraic, self.one_geometric

    def summary(self) -> dict:
        return {
            "n": int(self.eigenvalues.size),
            "rho": self.rho,
            "nu": self.nu,
            "semiconvergent": self.semiconvergent,
            "one_algebraic": self.one_algebraic,
            "one_geometric": self.one_geometric,
            "one_semisimple": self.one_semisimple,
            "tol_one": self.tol_one,
            "tol_rank": self.tol_rank,
        }


def spectral_report(H, tol_one: float = TOL_ONE, tol_rank: float = RANK_RTOL,
                    budget: int | None = EIG_BUDGET) -> SpectralReport:
    """Eigenvalues, rho, nu and the semiconvergence verdict of ``H``.

    ``H`` is semiconvergent when rho <= 1, the only eigenvalue on the unit
    circle is 1, and 1 is semisimple (rank(I - H) == rank((I - H)^2)).
    Eigenvalues within ``tol_one`` of 1 count as 1 and are left out of nu.
    """
    H = to_dense(H)
    n = H.shape[0]
    if H.ndim != 2 or H.shape[1] != n:
        raise ValueError("H must be square")
    _check_budget(n, budget)
    lam = np.linalg.eigvals(H) if n else np.empty(0, dtype=complex)
    if not np.all(np.isfinite(lam)):
        raise np.linalg.LinAlgError("eigensolve returned non-finite values")
    mod = np.abs(lam)
    is_one = np.abs(lam - 1.0) <= tol_one
    rho = float(mod.max(initial=0.0))
    nu = float(mod[~is_one].max(initial=0.0))
    alg = int(is_one.sum())
    if alg:
        E = np.eye(n) - H
        r1 = numerical_rank(E, tol_rank)
        r2 = numerical_rank(E @ E, tol_rank)
        geo = n - r1
        semisimple = r1 == r2
    else:
        geo, semisimple = 0, True
    other_on_circle = bool(np.any(mod[~is_one] >= 1.0 - tol_one))
    semi = (rho <= 1.0 + tol_one) and not other_on_circle and semisimple
    return SpectralReport(lam, rho, nu, bool(semi), alg, geo, bool(semisimple), tol_one, tol_rank)


# GP test and index ----------------------------------------------------------------


@dataclass
class IndexReport:
    index: int
    rank_sequence: list[int]
    tol_rank: float = RANK_RTOL

    @property
    def is_GP(self) -> bool:
        return self.index <= 1


def gp_test(A, tol_rank: float = RANK_RTOL) -> bool:
    """True when ``rank(A) == rank(A^2)``."""
    A = to_dense(A)
    return numerical_rank(A, tol_rank) == numerical_rank(A @ A, tol_rank)


def gp_test_subspaces(A, tol_rank: float = RANK_RTOL) -> bool:
    """GP test through ``dim(N(A) ∩ R(A)) == 0`` using SVD bases.

    Independent of :func:`gp_test`; used to cross-check it.
    """
    A = to_dense(A)
    U, s, Vt = np.linalg.svd(A)
    r = int(np.count_nonzero(s > tol_rank * s[0])) if s.size and s[0] > 0 else 0
    R = U[:, :r]
    N = Vt[r:].T
    if R.shape[1] == 0 or N.shape[1] == 0:
        return True
    # principal angles: a cosine of 1 means a shared direction
    cosines = np.linalg.svd(R.T @ N, compute_uv=False)
    return not bool(np.any(cosines > 1.0 - 1e-8))


def index_of(A, dmax: int | None = None, tol_rank: float = RANK_RTOL) -> IndexReport:
    """Smallest ``d`` with ``rank(A^d) == rank(A^(d+1))``."""
    A = to_dense(A)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError("A must be square")
    dmax = n if dmax is None else int(dmax)
    seq = [n]
    P = np.eye(n)
    for d in range(dmax + 1):
        P = P @ A
        seq.append(numerical_rank(P, tol_rank))
        if seq[-1] == seq[-2]:
            return IndexReport(d, seq, tol_rank)
    raise IndexStabilizationError(seq)


# Disk check -------------------------------------------------------------------------


@dataclass
class DiskReport:
    passed: bool
    skipped: bool = False
    n: int = 0
    rank: int = 0
    ell: int = 0
    nu: float = float("nan")
    radius: float = float("nan")
    zero_count: int = 0
    disk_excess: float = float("nan")
    pairing_error: float = float("nan")
    message: str = ""


def disk_check(A, s: Splitting, ell: int, tol: float = 1e-8, pair_tol: float = 1e-6,
               budget: int | None = EIG_BUDGET, tol_one: float = TOL_ONE) -> DiskReport:
    """Check the eigenvalue disk of ``A C_ell``.

    Passes when ``rank(A)`` eigenvalues lie in ``|lam - 1| <= nu^ell + tol``,
    the other ``n - rank(A)`` have modulus at most ``tol``, and the spectrum
    pairs with ``{1 - mu^ell}`` (``mu`` over the spectrum of ``H``) within
    ``pair_tol``.
    """
    A = to_dense(A)
    n = A.shape[0]
    try:
        _check_budget(n, budget)
    except BudgetExceeded as exc:
        return DiskReport(False, skipped=True, n=n, ell=ell, message=str(exc))
    spec = spectral_report(s.H_dense(), tol_one=tol_one, budget=None)
    AC = A @ preconditioner_matrix(s, ell)
    lam = np.linalg.eigvals(AC)
    r = numerical_rank(A)
    order = np.argsort(np.abs(lam))
    small, big = lam[order[: n - r]], lam[order[n - r:]]
    radius = spec.nu**ell
    zero_ok = bool(np.all(np.abs(small) <= tol)) and (r == n or np.all(np.abs(big) > tol))
    excess = float(np.max(np.abs(big - 1.0) - radius, initial=-np.inf))
    target = 1.0 - spec.eigenvalues**ell
    cost = np.abs(lam[:, None] - target[None, :])
    rows, cols = linear_sum_assignment(cost)
    pair = float(cost[rows, cols].max(initial=0.0))
    passed = zero_ok and excess <= tol and pair <= pair_tol
    return DiskReport(
        passed=bool(passed), n=n, rank=r, ell=ell, nu=spec.nu, radius=radius,
        zero_count=int(np.count_nonzero(np.abs(lam) <= tol)), disk_excess=excess, pairing_error=pair,
    )


# Residual bound ------------------------------------------------------------------------


@dataclass
class BoundReport:
    curve: np.ndarray
    kappa: float
    radius: float
    radius_choice: str
    dominated: bool
    vacuous: bool
    max_violation: float
    note: str = ""


def bound_evaluate(A, s: Splitting, ell: int, r_norm_history, radius_choice: str = "nu",
                   max_condition: float = 1e10, slack: float = 1e-12,
                   budget: int | None = EIG_BUDGET) -> BoundReport:
    """Residual bound ``kappa(T) radius^(k ell) ||r_0||`` for diagonalizable ``A C_ell``.

    ``T`` is the eigenvector matrix of ``A C_ell`` with unit columns and
    ``radius`` is ``nu(H)`` or ``rho(H)``.  With ``rho`` a singular
    semiconvergent ``H`` gives radius 1 and the bound carries no
    information; this is flagged as ``vacuous``.  The measured history is
    compared pointwise with an absolute roundoff allowance of
    ``slack * ||r_0||``.
    """
    if radius_choice not in ("nu", "rho"):
        raise ValueError("radius_choice must be 'nu' or 'rho'")
    A = to_dense(A)
    _check_budget(A.shape[0], budget)
    AC = A @ preconditioner_matrix(s, ell)
    _, T = np.linalg.eig(AC)
    kappa = float(np.linalg.cond(T))
    if not np.isfinite(kappa) or kappa > max_condition:
        raise NotDiagonalizableError(f"eigenvector matrix condition {kappa:.3e} exceeds {max_condition:.1e}")
    spec = spectral_report(s.H_dense(), budget=None)
    radius = spec.nu if radius_choice == "nu" else spec.rho
    hist = np.asarray(r_norm_history, dtype=float)
    r0 = hist[0] if hist.size else 1.0
    k = np.arange(hist.size + 1)
    curve = kappa * radius ** (k * ell) * r0
    diff = hist - curve[: hist.size]
    viol = float(diff.max(initial=-np.inf))
    note = ""
    vacuous = radius >= 1.0 - TOL_ONE
    if vacuous:
        note = f"radius {radius_choice} = {radius:.6g} >= 1: bound does not decay"
    return BoundReport(curve, kappa, radius, radius_choice, bool(viol <= slack * r0), vacuous, viol, note)


# Alpha grid search ------------------------------------------------------------------


@dataclass
class AlphaSweep:
    alpha_best: float
    nu_best: float
    table: list = field(default_factory=list)  # (alpha, nu or nan, error message)


def estimate_alpha_grid(build, grid, budget: int | None = EIG_BUDGET, tol_one: float = TOL_ONE) -> AlphaSweep:
    """Minimise ``nu(H(alpha))`` over ``grid``.

    ``build(alpha)`` returns an exact splitting.  Points where building or
    the eigensolve fails are recorded with ``nan`` and skipped.  Ties go to
    the first grid point.
    """
    table = []
    best = (math.nan, math.inf)
    for alpha in grid:
        alpha = float(alpha)
        try:
            s = build(alpha)
            _check_budget(s.n, budget)
            nu = spectral_report(s.H_dense(), tol_one=tol_one, budget=None).nu
        except Exception as exc:  # recorded, sweep continues
            table.append((alpha, math.nan, f"{type(exc).__name__}: {exc}"))
            continue
        table.append((alpha, nu, ""))
        if nu < best[1]:
            best = (alpha, nu)
    if math.isnan(best[0]):
        raise RuntimeError("no grid point could be evaluated")
    return AlphaSweep(best[0], best[1], table)


def log_grid(lo: float, hi: float, points: int) -> np.ndarray:
    """``points`` values from ``10**lo`` to ``10**hi`` equally spaced in the exponent."""
    return 10.0 ** np.linspace(lo, hi, int(points))


# Inner-count rule ---------------------------------------------------------------------


def select_inner_count(s: Splitting, b, cap: int = 10, tol: float = 0.1,
                       hard_limit: int | None = None) -> int:
    """Smallest ``i`` with ``||z_(i-1) - z_i|| < tol ||z_i||``, capped at ``cap``.

    The stationary iteration runs on ``A z = b`` from zero.  If the rule is
    not met within ``hard_limit`` (default ``n``) steps, ``cap`` is returned
    with a ``RuntimeWarning``.
    """
    b = np.asarray(b, dtype=float)
    limit = s.n if hard_limit is None else int(hard_limit)
    z = np.zeros_like(b)
    for i in range(1, limit + 1):
        z_new = s.step(z, b)
        if np.linalg.norm(z - z_new) < tol * np.linalg.norm(z_new):
            return min(i, cap)
        z = z_new
    warnings.warn(f"inner-count rule not met within {limit} steps; using cap {cap}", RuntimeWarning, stacklevel=2)
    return cap


# Planted-index fixtures -------------------------------------------------------------------------


@dataclass
class PlantedIndexFixture:
    A: np.ndarray
    b_good: np.ndarray
    x0_good: np.ndarray
    b_bad: np.ndarray
    d: int
    t: np.ndarray


def appendix_fixture(d: int, n: int, seed=0) -> PlantedIndexFixture:
    """Matrix of index ``d`` built as ``S J S^T`` with a random orthogonal ``S``.

    ``J`` is ``diag(lam) (+) N_d`` where ``lam`` is uniform in [1, 2] and
    ``N_d`` is the nilpotent Jordan block of size ``d``.  The right-hand
    sides are ``b_good in R(A^d)`` with ``x0_good in R(A^(d-1)) + N(A)``,
    and ``b_bad = t + A x0_good`` with ``0 != t in R(A^(d-1)) ∩ N(A)``.
    """
    d, n = int(d), int(n)
    if not 1 <= d < n:
        raise ValueError("need 1 <= d < n")
    rng = make_rng(seed)
    J = np.zeros((n, n))
    m = n - d
    J[np.arange(m), np.arange(m)] = rng.uniform(1.0, 2.0, m)
    for i in range(m, n - 1):
        J[i, i + 1] = 1.0
    S, R = np.linalg.qr(rng.standard_normal((n, n)))
    S = S * np.sign(np.diag(R))
    A = S @ J @ S.T
    t = S[:, m].copy()
    Ad1 = np.linalg.matrix_power(A, d - 1)
    x0 = Ad1 @ rng.standard_normal(n) + rng.standard_normal() * t
    b_good = np.linalg.matrix_power(A, d) @ rng.standard_normal(n)
    b_bad = t + A @ x0
    return PlantedIndexFixture(A, b_good, x0, b_bad, d, t)


# Krylov inclusion --------------------------------------------------------------------------


def _orthonormal_krylov(op, v, dim: int) -> np.ndarray:
    """Orthonormal basis (rows) of ``K_dim(op, v)`` by Arnoldi with two MGS passes."""
    Q = []
    w = v / np.linalg.norm(v)
    for _ in range(dim):
        for _ in range(2):
            for q in Q:
                w = w - (q @ w) * q
        nw = np.linalg.norm(w)
        if Q and nw <= 1e-12 * max(1.0, np.linalg.norm(op(Q[-1]))):
            break
        w = w / nw
        Q.append(w)
        w = op(w)
    return np.array(Q)


def krylov_inclusion(A, s: Splitting, ell: int, b, x0=None, tol: float = 1e-6) -> np.ndarray:
    """Projection residuals of the GMRES directions onto ``K_(k ell)(C_1 A, C_1 r_0)``.

    Runs GMRES with ``ell`` inner steps, and for every direction ``z_k`` with
    ``k ell < n`` returns ``||z_k - Q Q^T z_k|| / ||z_k||`` where ``Q`` spans
    the Krylov space of ``M^-1 A`` started at ``M^-1 r_0``.
    """
    A = to_dense(A)
    n = A.shape[0]
    b = np.asarray(b, dtype=float)
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    rep = gmres_inner(A, b, s, ell, x0=x0, tol=tol, keep_state=True)
    Z = rep.state.Z[: rep.outer_iterations]
    Minv = np.linalg.inv(s.M_dense())
    r0 = b - A @ x0
    kmax = min(len(Z), (n - 1) // ell)
    if kmax == 0:
        return np.empty(0)
    Q = _orthonormal_krylov(lambda v: Minv @ (A @ v), Minv @ r0, kmax * ell)
    out = []
    for k in range(1, kmax + 1):
        Qk = Q[: k * ell]
        z = Z[k - 1]
        out.append(np.linalg.norm(z - Qk.T @ (Qk @ z)) / np.linalg.norm(z))
    return np.array(out)


# Inner-sum checks ---------------------------------------------------------------------------------


def inner_sum_checks(s: Splitting, ell: int, tol_sigma: float = 1e-8) -> dict:
    """``sigma_min(sum_{i<ell} H^i)`` and the GP verdict for ``I - H^ell``."""
    H = s.H_dense()
    n = H.shape[0]
    S = np.eye(n)
    P = np.eye(n)
    for _ in range(ell - 1):
        P = P @ H
        S = S + P
    Hl = P @ H
    smin = float(np.linalg.svd(S, compute_uv=False).min())
    return {"sigma_min": smin, "nonsingular": smin > tol_sigma, "gp": gp_test(np.eye(n) - Hl)}


# Serialization --------------------------------------------------------------------------------


def _flat(report) -> dict:
    if isinstance(report, SpectralReport):
        return report.summary()
    if isinstance(report, IndexReport):
        return {"index": report.index, "is_GP": report.is_GP,
                "rank_sequence": " ".join(map(str, report.rank_sequence)), "tol_rank": report.tol_rank}
    if isinstance(report, BoundReport):
        return {"kappa": report.kappa, "radius": report.radius, "radius_choice": report.radius_choice,
                "dominated": report.dominated, "vacuous": report.vacuous,
                "max_violation": report.max_violation, "note": report.note}
    if isinstance(report, dict):
        return dict(report)
    return asdict(report)


def report_to_csv(report) -> str:
    """One header line plus one value line."""
    row = _flat(report)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
    w.writeheader()
    w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def report_to_text(report) -> str:
    row = _flat(report)
    width = max((len(k) for k in row), default=0)
    lines = []
    for k, v in row.items():
        if isinstance(v, float):
            v = f"{v:.6g}"
        lines.append(f"{k.ljust(width)}  {v}")
    return "\n".join(lines) + "\n"


def sweep_to_text(sweep: AlphaSweep) -> str:
    lines = [f"{'alpha':>12}  {'nu(H(alpha))':>14}"]
    for alpha, nu, err in sweep.table:
        mark = " *" if alpha == sweep.alpha_best else ""
        lines.append(f"{alpha:12.5g}  {nu:14.5f}{mark}" + (f"  {err}" if err else ""))
    lines.append(f"alpha_exp = {sweep.alpha_best:.5f}   nu = {sweep.nu_best:.5f}")
    return "\n".join(lines) + "\n"
