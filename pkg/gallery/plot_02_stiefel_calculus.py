"""Intrinsic derivatives on the Stiefel manifold.

A quadratic form ``f(A) = vec(A)^T M vec(A)`` is restricted to frames with
orthonormal columns. Its intrinsic gradient and Hessian are checked against
a Taylor expansion along a retraction and against a Hessian-vector formula
that uses first derivatives only.
"""
import numpy as np

from manifoldconc import stiefel
from manifoldconc.functionals import QuadraticForm
from manifoldconc.matcalc import hs_norm, inner
from manifoldconc.montecarlo import taylor_audit

rng = np.random.default_rng(1)
n, d = 8, 3
M = rng.standard_normal((n * d, n * d)) / np.sqrt(n * d)
f = QuadraticForm(M, (n, d))

A = stiefel.sample_uniform(n, d, rng)
print("orthonormality error:", stiefel.orthonormality_error(A))

# ## Tangent projection

V = stiefel.tangent_project(A, rng.standard_normal((n, d)))
print("A o V =", hs_norm(A.T @ V + V.T @ A) / 2)

# ## Taylor remainders along the polar retraction
#
# The first-order remainder should shrink like t^2 and the second-order
# one like t^3.

g = stiefel.intrinsic_gradient(f, A)
D = V / hs_norm(V)
for t in (1e-1, 1e-2, 1e-3):
    Y = stiefel.retract(A, D, t)
    E = Y - A
    lin = f.value(A) + inner(g, E)
    r1 = abs(f.value(Y) - lin)
    r2 = abs(f.value(Y) - lin - 0.5 * inner(stiefel.intrinsic_hessian_apply(f, A, E), E))
    print(f"t={t:.0e}  first-order {r1:.3e}  second-order {r2:.3e}")

rows = taylor_audit(f, "stiefel", n, d, trials=10, seed=0)
print("fitted slopes:", [(round(r.slope1, 2), round(r.slope2, 2)) for r in rows])

# ## Two routes to the Hessian-vector product

a = stiefel.intrinsic_hessian_apply(f, A, V)
b = stiefel.hessian_vector_via_identity(f, A, V)
print("max |difference|:", np.abs(a - b).max())

# The local Lipschitz constant of |grad f| never exceeds the Hessian norm.

H = stiefel.intrinsic_hessian(f, A)
print(f"modulus {stiefel.second_order_modulus(f, A):.4f} <= |H|_op {np.linalg.norm(H, 2):.4f}")
