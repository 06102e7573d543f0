"""Poincare, log-Sobolev and L^p-growth inequalities by sampling.

Each audit compares a Monte Carlo left side with its right side and passes
when the margin is not below -3 standard errors.
"""
from manifoldconc.cli import run_audit
from manifoldconc.bounds import lsi_constant

n, d = 30, 2
print("log-Sobolev constants:", lsi_constant(n, "stiefel"), lsi_constant(n, "grassmann"))

for manifold in ("stiefel", "grassmann"):
    for fun in ("linear", "quadratic"):
        (p,) = run_audit("poincare", manifold, fun, n, d, 50000, seed=0, threads=1)
        (e,) = run_audit("lsi", manifold, fun, n, d, 50000, seed=0, threads=1)
        print(f"{manifold:9s} {fun:9s}  Var {p.lhs:.4f} <= {p.rhs:.4f}   "
              f"Ent {e.lhs:.4f} <= {e.rhs:.4f}")

# ## Growth of L^p norms
#
# At p = 2 the inequality is an identity; the slack grows with p.

for r in run_audit("lp-growth", "stiefel", "quadratic", n, d, 50000, seed=0, threads=1):
    print(f"p={r.p:g}: |g|_p = {r.lhs:.4f} <= {r.rhs:.4f}  (stderr {r.stderr:.1e})")
