"""Vectorization, Kronecker products and the commutation matrix.

Everything in the package indexes matrices through the column-major
``vec``. This script checks the identities the rest of the code leans on.
"""
import numpy as np

from manifoldconc.matcalc import (commutation_matrix, commutation_perm, hs_norm, kron,
                                  op_norm, sym_product, vec)

rng = np.random.default_rng(0)

# ## vec and its inverse

A = np.array([[1.0, 2.0], [3.0, 4.0]])
print("vec(A) =", vec(A))

# ## The commutation matrix
#
# ``K_{n,m}`` sends ``vec(A)`` to ``vec(A^T)``. It is a permutation, so the
# package usually stores only the index array.

K = commutation_matrix(2, 3)
B = rng.standard_normal((2, 3))
print(np.array_equal(K @ vec(B), vec(B.T)))
print("as a permutation:", commutation_perm(2, 3))

# ## vec(AXB) = (B^T kron A) vec(X)

X = rng.standard_normal((3, 4))
C = rng.standard_normal((4, 2))
lhs = vec(B @ X @ C)
rhs = kron(C.T, B) @ vec(X)
print("vec identity error:", np.abs(lhs - rhs).max())

# Swapping Kronecker factors is a conjugation by commutation matrices.

D = rng.standard_normal((3, 2))
swapped = commutation_matrix(3, 2) @ kron(B, D) @ commutation_matrix(3, 2)
print("swap error:", np.abs(swapped - kron(D, B)).max())

# ## Symmetric product and operator norms
#
# ``M o N = (M^T N + N^T M) / 2`` vanishes exactly for tangent directions
# at a Stiefel point; the operator norm of a 3-tensor is bracketed between
# a power-iteration lower bound and the Hilbert-Schmidt norm.

Q = np.linalg.qr(rng.standard_normal((5, 2)))[0]
print("Q o Q =\n", sym_product(Q, Q))

T = rng.standard_normal((4, 4, 4))
r = op_norm(T)
print(f"|T|_op in [{r.lower:.4f}, {r.upper:.4f}], |T|_HS = {hs_norm(T):.4f}")
