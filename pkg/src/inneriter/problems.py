"""Test-problem generators.

Two families are provided:

* ``stokes_generate``: a finite-difference Stokes-type saddle-point system
  ``[[C, B^T], [-B, 0]]`` on a ``q x q`` grid, made singular by appending two
  dependent constraint rows.
* ``structured_generate``: a generalized saddle-point system
  ``[[C, B], [-B^T, G]]`` built from a diagonal canonical form hidden
  behind random Givens rotations, with a prescribed condition number.

Problems can be written to and read from a directory of Matrix Market
files plus a ``meta.txt`` key=value sidecar.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .matcore import (
    as_csr,
    direct_sum,
    kron,
    make_rng,
    read_matrix,
    read_vector,
    to_dense,
    tridiag,
    write_matrix,
    write_vector,
)

__all__ = [
    "SaddleProblem",
    "ConditionCheckError",
    "stokes_generate",
    "structured_generate",
    "verify_problem",
    "export_problem",
    "load_problem",
]

# Dense SVD for the condition check is skipped above this size.
CONDITION_CHECK_BUDGET = 2500


class ConditionCheckError(RuntimeError):
    """The assembled structured matrix does not have the designed condition number."""


@dataclass
class SaddleProblem:
    A: sp.csr_matrix
    blocks: dict
    b: np.ndarray
    x_truth: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def family(self) -> str:
        return self.meta.get("family", "unknown")


# Stokes family -------------------------------------------------------------


def stokes_blocks(q: int, mu: float):
    """Return ``(T, F, C, B)`` for the upwind Stokes discretization on a q x q grid."""
    h = 1.0 / (q + 1)
    T = as_csr(mu / h**2 * tridiag(q, -1.0, 2.0, -1.0) + (0.5 / h) * tridiag(q, -1.0, 0.0, 1.0))
    F = as_csr(tridiag(q, -1.0, 1.0, 0.0) / h)
    I = sp.identity(q, format="csr")
    L = as_csr(kron(I, T) + kron(T, I))
    C = direct_sum(L, L)
    Bhat = as_csr(sp.hstack([kron(I, F).T, kron(F, I).T]))
    half = q * q // 2
    e1 = np.concatenate([np.ones(half), np.zeros(q * q - half)])
    e2 = e1[::-1].copy()
    b1 = Bhat.T @ e1
    b2 = Bhat.T @ e2
    B = as_csr(sp.vstack([Bhat, sp.csr_matrix(b1), sp.csr_matrix(b2)]))
    return T, F, C, B


def stokes_generate(q: int, mu: float) -> SaddleProblem:
    """Singular Stokes saddle-point problem with ``n = 3 q^2 + 2``.

    ``b = A @ ones`` so the system is consistent; ``x_truth`` is the
    all-ones vector (one solution among many).
    """
    q = int(q)
    if q < 2 or q % 2:
        raise ValueError(f"grid size q must be even and >= 2, got {q}")
    if not mu > 0:
        raise ValueError(f"viscosity mu must be positive, got {mu}")
    _, _, C, B = stokes_blocks(q, float(mu))
    A = as_csr(sp.bmat([[C, B.T], [-B, None]]))
    x = np.ones(A.shape[0])
    meta = {"family": "stokes", "q": q, "mu": float(mu), "n": A.shape[0], "p": C.shape[0], "m": B.shape[0]}
    return SaddleProblem(A=A, blocks={"C": C, "B": B}, b=A @ x, x_truth=x, meta=meta)


# Structured family ----------------------------------------------------------


def structured_canonical(q: int, j: int):
    """Canonical diagonal blocks ``(C, G, B)`` before any rotation.

    ``C`` is ``diag(phi) (+) 0`` with ``phi`` log-spaced from 1 down to
    ``10**-j`` over ``p - q - 1`` entries, ``G`` is ``diag(psi) (+) 0`` with
    ``psi`` log-spaced from 1 towards ``10**-j`` over ``q - 2`` entries, and
    ``B`` stacks ``G`` on top of zeros.
    """
    p = q * q
    kappa = 10.0 ** (-j)
    r = p - q - 1
    phi = kappa ** (np.arange(r) / (r - 1))
    psi = kappa ** (np.arange(q - 2) / (q - 2))
    C = np.zeros((p, p))
    C[np.arange(r), np.arange(r)] = phi
    G = np.zeros((q, q))
    G[np.arange(q - 2), np.arange(q - 2)] = psi
    B = np.zeros((p, q))
    B[:q, :q] = G
    return C, G, B


def _rotate(C, G, B, on_u: bool, i: int, k: int, c: float, s: float) -> None:
    """Apply one Givens rotation as an orthogonal similarity, in place."""
    if on_u:
        # C <- R C R^T, B <- R B
        ri, rk = C[i].copy(), C[k].copy()
        C[i], C[k] = c * ri - s * rk, s * ri + c * rk
        ci, ck = C[:, i].copy(), C[:, k].copy()
        C[:, i], C[:, k] = c * ci - s * ck, s * ci + c * ck
        bi, bk = B[i].copy(), B[k].copy()
        B[i], B[k] = c * bi - s * bk, s * bi + c * bk
    else:
        # G <- R G R^T, B <- B R^T
        ri, rk = G[i].copy(), G[k].copy()
        G[i], G[k] = c * ri - s * rk, s * ri + c * rk
        ci, ck = G[:, i].copy(), G[:, k].copy()
        G[:, i], G[:, k] = c * ci - s * ck, s * ci + c * ck
        bi, bk = B[:, i].copy(), B[:, k].copy()
        B[:, i], B[:, k] = c * bi - s * bk, s * bi + c * bk


def _assemble_structured(C, G, B) -> sp.csr_matrix:
    return as_csr(sp.bmat([[sp.csr_matrix(C), sp.csr_matrix(B)], [sp.csr_matrix(-B.T), sp.csr_matrix(G)]]))


def _density(C, G, B) -> float:
    n = C.shape[0] + G.shape[0]
    return (np.count_nonzero(C) + np.count_nonzero(G) + 2 * np.count_nonzero(B)) / float(n * n)


def condition_number(A) -> float:
    """``||A|| ||A^+||`` from the singular values, ignoring those below the rank threshold."""
    s = np.linalg.svd(to_dense(A), compute_uv=False)
    s = s[s > 1e-10 * s[0]]
    return float(s[0] / s[-1])


def structured_generate(
    q: int,
    j: int,
    density_target: float = 0.001,
    seed: int = 0,
    batch: int | None = None,
    max_rotations: int | None = None,
    check_condition: bool | None = None,
) -> SaddleProblem:
    """Structured generalized saddle-point problem with ``p = q^2``, ``n = p + q``.

    Random Givens rotations are applied in batches (``batch`` rotations on the
    ``p``-space plus a proportional number on the ``q``-space) until the
    density of ``A`` reaches ``density_target``.  The density is measured
    before every batch, so a canonical form that is already dense enough is
    returned unrotated.

    The condition number ``||A|| ||A^+||`` is checked against its designed
    value ``sqrt(2) 10**j`` (relative 1e-6) when ``n`` is within the dense
    budget or ``check_condition`` is true; a mismatch raises
    :class:`ConditionCheckError`.
    """
    q, j = int(q), int(j)
    if q < 3:
        raise ValueError(f"q must be >= 3, got {q}")
    if j < 1:
        raise ValueError(f"j must be >= 1, got {j}")
    p = q * q
    n = p + q
    C, G, B = structured_canonical(q, j)
    rng = make_rng(seed)
    if batch is None:
        batch = max(1, p // 16)
    vbatch = max(1, (batch * q) // p)
    if max_rotations is None:
        max_rotations = 50 * p
    nu = nv = 0
    while _density(C, G, B) < density_target and nu < max_rotations:
        for on_u, count, dim in ((True, batch, p), (False, vbatch, q)):
            for _ in range(count):
                i, k = np.sort(rng.choice(dim, size=2, replace=False))
                theta = rng.uniform(0.0, 2.0 * np.pi)
                _rotate(C, G, B, on_u, int(i), int(k), np.cos(theta), np.sin(theta))
        nu += batch
        nv += vbatch
    A = _assemble_structured(C, G, B)
    design = float(np.sqrt(2.0) * 10.0**j)
    meta = {
        "family": "structured",
        "q": q,
        "j": j,
        "p": p,
        "n": n,
        "seed": int(seed),
        "density_target": float(density_target),
        "density": A.nnz / float(n * n),
        "rotations_u": nu,
        "rotations_v": nv,
        "condition_design": design,
    }
    if check_condition is None:
        check_condition = n <= CONDITION_CHECK_BUDGET
    if check_condition:
        cond = condition_number(A)
        meta["condition"] = cond
        if abs(cond - design) > 1e-6 * design:
            raise ConditionCheckError(f"condition number {cond:.10g} differs from design {design:.10g}")
    x = np.arange(1.0, n + 1.0)
    blocks = {"C": sp.csr_matrix(C), "B": sp.csr_matrix(B), "G": sp.csr_matrix(G)}
    for M in blocks.values():
        M.eliminate_zeros()
    return SaddleProblem(A=A, blocks=blocks, b=A @ x, x_truth=x, meta=meta)


# Verification ---------------------------------------------------------------


def _consistency_residual(A, b) -> float:
    A = to_dense(A)
    y, *_ = np.linalg.lstsq(A, b, rcond=1e-12)
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(A @ y - b) / nb) if nb else 0.0


def verify_problem(problem: SaddleProblem, tol: float = 1e-8) -> dict:
    """Run the structural checks of a problem.

    Returns ``{name: (passed, measured)}``; failures are entries, not
    exceptions.
    """
    out: dict = {}
    A = problem.A
    fam = problem.family
    C = problem.blocks.get("C")
    B = problem.blocks.get("B")
    if fam == "stokes" and C is not None and B is not None:
        Cd = to_dense(C)
        lam = float(np.linalg.eigvalsh((Cd + Cd.T) / 2).min())
        out["C_symmetric_part_pd"] = (lam > 0, lam)
        ref = as_csr(sp.bmat([[C, B.T], [-B, None]]))
        diff = float(abs(ref - A).max()) if ref.shape == A.shape else float("inf")
        out["block_structure"] = (diff == 0.0, diff)
    elif fam == "structured" and C is not None:
        G = problem.blocks["G"]
        for name, M in (("C", C), ("G", G)):
            Md = to_dense(M)
            asym = float(np.abs(Md - Md.T).max(initial=0.0))
            lam = float(np.linalg.eigvalsh((Md + Md.T) / 2).min()) if Md.size else 0.0
            scale = max(float(np.abs(Md).max(initial=0.0)), 1.0)
            out[f"{name}_symmetric_psd"] = (asym <= 1e-12 * scale and lam >= -tol * scale, lam)
        ref = as_csr(sp.bmat([[C, B], [-B.T, G]]))
        diff = float(abs(ref - A).max()) if ref.shape == A.shape else float("inf")
        out["block_structure"] = (diff == 0.0, diff)
        design = problem.meta.get("condition_design")
        if design is not None and A.shape[0] <= CONDITION_CHECK_BUDGET:
            cond = condition_number(A)
            out["condition_number"] = (abs(cond - design) <= 1e-6 * design, cond)
    res = _consistency_residual(A, problem.b)
    out["b_in_range"] = (res <= tol, res)
    return out


# Export / import --------------------------------------------------------------


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _parse(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def export_problem(problem: SaddleProblem, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / "A.mtx", problem.A)
    write_vector(d / "b.mtx", problem.b)
    if problem.x_truth is not None:
        write_vector(d / "x_truth.mtx", problem.x_truth)
    for name, M in problem.blocks.items():
        write_matrix(d / f"{name}.mtx", sp.csr_matrix(M))
    lines = [f"{k}={_fmt(v)}" for k, v in problem.meta.items()]
    (d / "meta.txt").write_text("\n".join(lines) + "\n")
    return d


def load_problem(directory) -> SaddleProblem:
    d = Path(directory)
    if not (d / "A.mtx").exists():
        raise FileNotFoundError(f"{d} has no A.mtx")
    meta = {}
    if (d / "meta.txt").exists():
        for line in (d / "meta.txt").read_text().splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                meta[k.strip()] = _parse(v.strip())
    A = as_csr(read_matrix(d / "A.mtx"))
    b = read_vector(d / "b.mtx")
    x = read_vector(d / "x_truth.mtx") if (d / "x_truth.mtx").exists() else None
    blocks = {}
    for name in ("C", "B", "G"):
        if (d / f"{name}.mtx").exists():
            blocks[name] = as_csr(read_matrix(d / f"{name}.mtx"))
    return SaddleProblem(A=A, blocks=blocks, b=b, x_truth=x, meta=meta)
