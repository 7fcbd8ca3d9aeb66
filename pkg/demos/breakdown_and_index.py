"""When GMRES breaks down on a singular system.

A matrix with a planted index d is built as S J S^T.  For d = 1 (a GP matrix)
GMRES solves every consistent system.  For d >= 2 a right-hand side can be
consistent yet make GMRES stop at step 1 without a solution, because the
initial residual lies in R(A^(d-1)) ∩ N(A).

    python3 demos/breakdown_and_index.py
"""

import numpy as np

from inneriter.analysis import appendix_fixture, gp_test, index_of
from inneriter.krylov import gmres

for d in (1, 2, 3):
    fx = appendix_fixture(d, 10, seed=d)
    rep = index_of(fx.A)
    print(f"planted index {d}: measured index {rep.index}, rank sequence {rep.rank_sequence}, "
          f"GP = {gp_test(fx.A)}")
    good = gmres(fx.A, fx.b_good, x0=fx.x0_good)
    print(f"  b in R(A^d):          {good.termination.value} after {good.outer_iterations} steps, "
          f"residual {good.relative_residual:.1e}")
    bad = gmres(fx.A, fx.b_bad, x0=fx.x0_good)
    r0 = fx.b_bad - fx.A @ fx.x0_good
    moved = np.linalg.norm(fx.b_bad - fx.A @ bad.x - r0) / np.linalg.norm(r0)
    consistent = np.linalg.matrix_rank(np.column_stack([fx.A, fx.b_bad])) == np.linalg.matrix_rank(fx.A)
    print(f"  r0 in N(A) (consistent={consistent}): {bad.termination.value} at step {bad.failed_step}, "
          f"||r1 - r0|| / ||r0|| = {moved:.1e}")
