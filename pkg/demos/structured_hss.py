"""Choosing the HSS shift and the inner count for a structured singular problem.

The alpha that minimises the pseudo spectral radius nu(H(alpha)) is found on a
log grid; the inner count comes from the stopping rule
||z_(i-1) - z_i|| < 0.1 ||z_i||.  Then HSS with one inner step, HSS with the
selected count and plain GMRES are compared.

    python3 demos/structured_hss.py [j]
"""

import sys

from inneriter.analysis import estimate_alpha_grid, log_grid, select_inner_count, sweep_to_text
from inneriter.harness import hss_grid
from inneriter.krylov import gmres, gmres_inner
from inneriter.problems import structured_generate, verify_problem
from inneriter.splittings import hss_build

j = int(sys.argv[1]) if len(sys.argv) > 1 else 3
P = structured_generate(16, j)
print(f"q = 16, j = {j}: n = {P.n}, density = {P.meta['density']:.4f}, "
      f"||A|| ||A^+|| = {P.meta['condition']:.6g} (design {P.meta['condition_design']:.6g})")
for name, (ok, value) in verify_problem(P).items():
    print(f"  {name:22s} {'ok' if ok else 'FAILED'}  {value:.3g}")

sweep = estimate_alpha_grid(lambda a: hss_build(P.A, a), log_grid(*hss_grid(j)))
print()
print(sweep_to_text(sweep), end="")

s = hss_build(P.A, sweep.alpha_best)
ell = select_inner_count(s, P.b)
print(f"\ninner count from the stopping rule: {ell}")
for name, rep in (("GMRES", gmres(P.A, P.b)), ("HSS l=1", gmres_inner(P.A, P.b, s, 1)),
                  (f"HSS l={ell}", gmres_inner(P.A, P.b, s, ell))):
    print(f"{name:<9} {rep.outer_iterations:>5} outer iterations  ({rep.termination.value})")
