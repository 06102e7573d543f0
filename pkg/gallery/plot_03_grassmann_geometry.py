"""Subspaces as projection matrices.

Points of the Grassmannian are rank-``d`` orthogonal projections. This
script looks at the map from frames to projections, principal angles, and
the distance of a random subspace to a fixed one.
"""
import numpy as np

from manifoldconc import grassmann, stiefel
from manifoldconc.functionals import grassmann_dist_sq

rng = np.random.default_rng(2)
n, d = 10, 2

# ## From frames to projections
#
# ``A -> A A^T`` is sqrt(2)-Lipschitz in the Hilbert-Schmidt norm, and the
# constant cannot be 1: compare e_1 with the normalized all-ones vector.

A = stiefel.sample_uniform(n, d, rng, size=20000)
B = stiefel.sample_uniform(n, d, rng, size=20000)
num = np.linalg.norm(A @ A.swapaxes(1, 2) - B @ B.swapaxes(1, 2), axis=(1, 2))
ratio = num / np.linalg.norm(A - B, axis=(1, 2))
print(f"largest ratio over 20000 pairs: {ratio.max():.4f} (sqrt 2 = {np.sqrt(2):.4f})")

e1 = np.eye(n)[:, :1]
u = np.full((n, 1), 1 / np.sqrt(n))
print("witness ratio:", np.linalg.norm(e1 @ e1.T - u @ u.T) / np.linalg.norm(e1 - u))

# ## Principal angles
#
# The squared cosines are the nonzero eigenvalues of P_A P_B.

a, b = A[0], B[0]
theta = grassmann.principal_angles(a, b)
ev = np.sort(np.linalg.eigvals(a @ a.T @ b @ b.T).real)[-d:]
print("cos^2:", np.cos(theta) ** 2, " eigenvalues:", ev)

# ## Distance to a fixed subspace
#
# For P_F onto span(e_1, ..., e_d), |P - P_F|^2 = 2(d - <P, P_F>) has mean
# 2d(1 - d/n).

PF = np.diag([1.0] * d + [0.0] * (n - d))
P = grassmann.sample_uniform(n, d, rng, size=50000)
v = grassmann_dist_sq(P, PF)
print(f"mean {v.mean():.4f} +- {v.std() / np.sqrt(v.size):.4f}, exact {2 * d * (1 - d / n):.4f}")
