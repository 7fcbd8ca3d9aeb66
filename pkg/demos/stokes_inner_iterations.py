"""Inner-iteration preconditioning on a singular Stokes-type system.

Builds the 16 x 16 grid problem (n = 770, two redundant constraint rows),
then compares plain GMRES with GMRES preconditioned by one and three
GSS steps and with flexible GMRES whose inner count adapts per step.

    python3 demos/stokes_inner_iterations.py [mu]
"""

import sys

from inneriter.analysis import spectral_report
from inneriter.harness import STOKES_ALPHA
from inneriter.krylov import fgmres, gmres, gmres_inner
from inneriter.matcore import numerical_rank
from inneriter.problems import stokes_generate
from inneriter.splittings import InnerIterationPreconditioner, gss_build

mu = float(sys.argv[1]) if len(sys.argv) > 1 else 1.0
P = stokes_generate(16, mu)
print(f"n = {P.n}, rank(A) = {numerical_rank(P.A)}  (singular, b = A @ ones is consistent)")

alpha = STOKES_ALPHA[16]
s = gss_build(P.blocks["C"], P.blocks["B"], alpha)
spec = spectral_report(s.H_dense())
print(f"GSS alpha = {alpha}, beta = {s.beta:.4g}: rho(H) = {spec.rho:.6f}, nu(H) = {spec.nu:.6f}, "
      f"semiconvergent = {spec.semiconvergent}")

runs = [("GMRES", gmres(P.A, P.b))]
for ell in (1, 3):
    runs.append((f"GSS l={ell}", gmres_inner(P.A, P.b, s, ell)))
runs.append(("F-GSS", fgmres(P.A, P.b, InnerIterationPreconditioner(s), inner_cap=100 * P.n)))

print(f"\n{'method':<10} {'outer':>6} {'inner total':>12} {'rel. residual':>14}  outcome")
for name, rep in runs:
    inner = sum(rep.inner_iteration_counts)
    print(f"{name:<10} {rep.outer_iterations:>6} {inner:>12} {rep.relative_residual:>14.3e}  {rep.termination.value}")
