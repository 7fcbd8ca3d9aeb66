"""Fixture builders shared by the unit and acceptance tests."""

import numpy as np
import scipy.sparse as sp

from inneriter.analysis import spectral_report
from inneriter.matcore import make_rng
from inneriter.problems import stokes_generate, structured_generate
from inneriter.splittings import classic_build, gss_build, hss_build


def random_dd(n, rng, density=0.3):
    """Nonsymmetric, strictly diagonally dominant (hence nonsingular) sparse matrix."""
    A = sp.random(n, n, density=density, random_state=rng, data_rvs=lambda k: rng.uniform(-1, 1, k)).toarray()
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, np.abs(A).sum(axis=1) + rng.uniform(0.5, 1.5, n))
    return A


def singular_m_matrix(n, rng, density=0.3):
    """Irreducible singular M-matrix ``D - W`` with zero row sums (so ``A @ ones = 0``)."""
    W = sp.random(n, n, density=density, random_state=rng, data_rvs=lambda k: rng.uniform(0.1, 1, k)).toarray()
    np.fill_diagonal(W, 0.0)
    # a directed cycle keeps the graph strongly connected
    idx = np.arange(n)
    W[idx, (idx + 1) % n] += 1.0
    return np.diag(W.sum(axis=1)) - W


def semiconvergent_fixtures(count=20, seed=0, max_n=40):
    """``count`` pairs ``(name, A, splitting)`` with semiconvergent iteration matrices.

    Mixes nonsingular and singular matrices and every splitting family.
    """
    rng = make_rng(seed)
    out = []
    kinds = ("jacobi", "gauss-seidel", "sor", "ssor")
    i = 0
    while len(out) < count:
        i += 1
        n = int(rng.integers(8, max_n + 1))
        r = i % 6
        if r in (0, 1):
            A = random_dd(n, rng)
            kind = kinds[i % 4]
            s = classic_build(A, kind, omega=1.1 if kind in ("sor", "ssor") else 1.0)
            name = f"dd-{kind}-{n}"
        elif r in (2, 3):
            A = singular_m_matrix(n, rng)
            kind = ("gauss-seidel", "sor", "ssor")[i % 3]
            s = classic_build(A, kind, omega=1.2 if kind != "gauss-seidel" else 1.0)
            name = f"mm-{kind}-{n}"
        elif r == 4:
            q = (4, 5)[(i // 6) % 2]
            P = structured_generate(q, 1 + (i // 6) % 3, density_target=0.0, seed=i)
            A = P.A.toarray()
            s = hss_build(A, float(10 ** rng.uniform(-1.5, 0.0)))
            name = f"hss-q{q}"
        else:
            q = 2 if max_n < 50 else (2, 4)[(i // 6) % 2]
            P = stokes_generate(q, float((1.0, 0.1)[i % 2]))
            A = P.A.toarray()
            s = gss_build(P.blocks["C"], P.blocks["B"], float(rng.uniform(0.5, 20.0)))
            name = f"gss-q{q}"
        if spectral_report(s.H_dense()).semiconvergent:
            out.append((name, A, s))
    return out
