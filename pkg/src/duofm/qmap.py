"""Complex functional maps acting on tangent vector fields.

``Q`` has shape (k_N, k_M) and consumes source (M) coefficients:
``Q @ B_M ~ B_N``.  Gradients of real losses with respect to ``Q`` are
Wirtinger co-gradients ``dL/d conj(Q)``; the steepest-descent direction in
``(Re Q, Im Q)`` is minus twice the co-gradient.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .fmap import penalty_masks, pinv_solve, solve_rows
from .operators import inner_vector
from .spectral import project_complex, project_real


@dataclass(frozen=True, eq=False)
class ComplexFunctionalMap:
    Q: np.ndarray
    lam: float = 0.0
    rank_deficient: bool = False

    def transfer(self, coeffs):
        """Map source spectral coefficients of tangent fields to the target."""
        return self.Q @ coeffs


def complex_spectral_coeffs(basis, gradient, descriptors):
    """``B = Psi^H M (G D)``: spectral coefficients of descriptor gradients."""
    D = descriptors.values if hasattr(descriptors, "values") else np.asarray(descriptors)
    if gradient.shape[1] != D.shape[0] or gradient.shape[0] != basis.evecs.shape[0]:
        raise DimensionError("gradient operator, basis and descriptors disagree in size")
    return project_complex(basis, gradient @ D)


def _check_pair(B_M, B_N):
    B_M = np.asarray(B_M, dtype=complex)
    B_N = np.asarray(B_N, dtype=complex)
    if B_M.ndim != 2 or B_N.ndim != 2 or B_M.shape[1] != B_N.shape[1]:
        raise DimensionError(f"coefficient shapes {B_M.shape} and {B_N.shape} are incompatible")
    return B_M, B_N


def estimate_Q_plain(B_M, B_N):
    """``Q = B_N pinv(B_M)`` (complex least squares)."""
    B_M, B_N = _check_pair(B_M, B_N)
    if B_M.shape[1] < B_M.shape[0]:
        warnings.warn("fewer descriptors than basis fields: complex map is underdetermined",
                      stacklevel=2)
    Q, deficient = pinv_solve(B_N, B_M)
    return ComplexFunctionalMap(Q, 0.0, deficient)


def estimate_Q_regularized(B_M, B_N, evals_M, evals_N, lam=1e-3, normalize=True):
    """Minimiser of ``|Q B_M - B_N|^2 + lam |Q L_M - L_N Q|^2`` row by row.

    Row ``i`` solves ``(B_M B_M^H + lam D_i) q_i^H = B_M b_i^H`` with
    ``D_i = diag((mu_M[j] - mu_N[i])**2)``.
    """
    B_M, B_N = _check_pair(B_M, B_N)
    if len(evals_M) != B_M.shape[0] or len(evals_N) != B_N.shape[0]:
        raise DimensionError("spectra do not match coefficient rows")
    if lam == 0:
        Q, deficient = pinv_solve(B_N, B_M)
        return ComplexFunctionalMap(Q, 0.0, deficient)
    masks = penalty_masks(evals_N, evals_M, normalize)
    K = B_M @ B_M.conj().T
    Y = solve_rows(K, masks, lam, B_M @ B_N.conj().T)
    return ComplexFunctionalMap(Y.conj().T, lam, False)


def loss_ortho_Q(Q):
    """``|Q^H Q - I|_F^2`` and its co-gradient ``2 Q (Q^H Q - I)``."""
    Q = np.asarray(Q, dtype=complex)
    if Q.shape[0] != Q.shape[1]:
        raise DimensionError("orthogonality loss needs a square map")
    E = Q.conj().T @ Q - np.eye(Q.shape[1])
    return float(np.sum(np.abs(E) ** 2)), 2.0 * Q @ E


def loss_iso_Q(Q, evals_M, evals_N, normalize=True):
    """``|Q L_M - L_N Q|_F^2`` for diagonal spectra, with co-gradient ``D * Q``."""
    Q = np.asarray(Q, dtype=complex)
    D = penalty_masks(evals_N, evals_M, normalize)
    if D.shape != Q.shape:
        raise DimensionError(f"spectra give {D.shape}, map is {Q.shape}")
    return float(np.sum(D * np.abs(Q) ** 2)), D * Q


def default_probes(lb_N, cb_M, count=20, seed=0):
    """Band-limited probe pairs: LB eigenfunctions 2..10 of N with basis fields of M."""
    hi = min(10, lb_N.k)
    funcs = np.arange(1, hi)
    fields = np.arange(cb_M.k)
    grid = np.array([(f, x) for f in funcs for x in fields])
    rng = np.random.default_rng(seed)
    pick = grid[rng.choice(len(grid), size=min(count, len(grid)), replace=False)]
    return lb_N.evecs[:, pick[:, 0]], cb_M.evecs[:, pick[:, 1]]


@dataclass
class PushforwardReport:
    lhs: np.ndarray
    rhs: np.ndarray
    normalized: np.ndarray
    max_residual: float
    mean_residual: float
    q_ortho: float


def verify_pushforward_relation(C, Q, lb_M, lb_N, cb_M, cb_N, grad_M, grad_N, f=None, X=None):
    """Integrated residual of ``<X, grad(C f)>_M = <Q X, grad f>_N``.

    ``f`` are real functions on N (n_N, m) and ``X`` tangent fields on M
    (n_M, m), paired column by column.  Each residual is divided by the
    Cauchy-Schwarz bound of its two sides.  The orthogonality defect of
    ``Q`` is reported alongside as the orientation certificate.
    """
    C = C.C if hasattr(C, "C") else np.asarray(C)
    Q = Q.Q if hasattr(Q, "Q") else np.asarray(Q)
    if f is None or X is None:
        f, X = default_probes(lb_N, cb_M)
    f = np.asarray(f, dtype=float).reshape(lb_N.evecs.shape[0], -1)
    X = np.asarray(X, dtype=complex).reshape(cb_M.evecs.shape[0], -1)
    if f.shape[1] != X.shape[1]:
        raise DimensionError("probe functions and fields must pair up")
    pulled = lb_M.evecs @ (C @ project_real(lb_N, f))
    grad_pulled = grad_M @ pulled
    moved = cb_N.evecs @ (Q @ project_complex(cb_M, X))
    grad_f = grad_N @ f
    lhs = inner_vector(X, grad_pulled, lb_M.mass)
    rhs = inner_vector(moved, grad_f, lb_N.mass)

    def norms(Y, m):
        return np.sqrt(np.einsum("i,ij->j", m, np.abs(Y) ** 2))

    bound = norms(X, lb_M.mass) * norms(grad_pulled, lb_M.mass) + norms(moved, lb_N.mass) * norms(grad_f, lb_N.mass)
    normalized = np.abs(lhs - rhs) / np.maximum(bound, 1e-300)
    return PushforwardReport(lhs, rhs, normalized, float(normalized.max()), float(normalized.mean()),
                             loss_ortho_Q(Q)[0])


def save_qmap(qmap, path):
    """Text header ``k_N k_M lam`` then interleaved (re, im) row-major float64."""
    Q = np.ascontiguousarray(qmap.Q, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(f"{Q.shape[0]} {Q.shape[1]} {qmap.lam!r}\n".encode("ascii"))
        fh.write(Q.view("<f8").tobytes())


def load_qmap(path):
    with open(path, "rb") as fh:
        head = fh.readline().decode("ascii").split()
        kn, km, lam = int(head[0]), int(head[1]), float(head[2])
        Q = np.frombuffer(fh.read(), dtype="<f8").view("<c16").reshape(kn, km).copy()
    return ComplexFunctionalMap(Q, lam)
