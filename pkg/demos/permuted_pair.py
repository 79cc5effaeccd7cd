"""Recover a vertex relabeling with both kinds of functional map.

A blob and a shuffled copy of it share the same geometry, so the real map C
and the complex map Q should both be close to (signed) permutations of the
identity, and both point maps should undo the shuffle.
"""
import numpy as np

from duofm import estimate_C_regularized, estimate_Q_regularized, evaluate, generate_symmetric_blob, prepare_shape
from duofm import complex_spectral_coeffs, p2p_from_C, p2p_from_Q, verify_pushforward_relation
from duofm.scenarios import feature_stack
from duofm.shape import random_permutation
from duofm.spectral import project_real

mesh, _ = generate_symmetric_blob(3, 10)
perm = random_permutation(mesh.n_vertices, 1)
M, N = prepare_shape(mesh), prepare_shape(mesh.relabeled(perm))
print(f"{mesh.n_vertices} vertices, k_C={M.lb.k}, k_Q={M.conn.k}")

X_M, X_N = feature_stack(M), feature_stack(N)
C = estimate_C_regularized(project_real(M.lb, X_M), project_real(N.lb, X_N), M.lb.evals, N.lb.evals)
Q = estimate_Q_regularized(complex_spectral_coeffs(M.conn, M.gradient, X_M),
                           complex_spectral_coeffs(N.conn, N.gradient, X_N), M.conn.evals, N.conn.evals)

# eigenfunctions carry arbitrary signs, so compare magnitudes
print("max | |C| - I |:", np.abs(np.abs(C.C) - np.eye(C.C.shape[0])).max())
print("max | |Q| - I |:", np.abs(np.abs(Q.Q) - np.eye(Q.Q.shape[0])).max())

pc = p2p_from_C(C, M.lb.evecs, N.lb.evecs)
pq = p2p_from_Q(Q, M.conn.evecs, N.conn.evecs, M.divergence, N.divergence)
for name, pm in (("C", pc), ("Q", pq)):
    rep = evaluate(pm, perm, N.mesh)
    print(f"{name}: accuracy {pm.accuracy(perm):.1%}, mean geodesic error x100 {rep.mean_error:.3f}")

rel = verify_pushforward_relation(C, Q, M.lb, N.lb, M.conn, N.conn, M.gradient, N.gradient)
print(f"gradient pushforward residual: max {rel.max_residual:.1e}")
