"""Real functional maps: estimation from spectral descriptors and C-side energies.

Direction convention: ``C`` has shape (k_M, k_N) and consumes target (N)
coefficients, so ``C @ A_N ~ A_M``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, SolveError

PINV_RTOL = 1e-10


@dataclass(frozen=True)
class FmapOptions:
    lam: float = 1e-3
    use_normalized_spectra: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")


@dataclass(frozen=True, eq=False)
class FunctionalMap:
    C: np.ndarray
    lam: float = 0.0
    rank_deficient: bool = False


def _spectra(evals, normalize):
    evals = np.asarray(evals, dtype=float)
    return evals / evals[-1] if normalize else evals


def _check_pair(A_M, A_N):
    A_M = np.asarray(A_M)
    A_N = np.asarray(A_N)
    if A_M.ndim != 2 or A_N.ndim != 2 or A_M.shape[1] != A_N.shape[1]:
        raise DimensionError(f"descriptor coefficient shapes {A_M.shape} and {A_N.shape} are incompatible")
    return A_M, A_N


def pinv_solve(A_M, A_N):
    """Minimum-norm least squares ``A_M pinv(A_N)`` with a rank flag."""
    U, s, Vh = np.linalg.svd(A_N, full_matrices=False)
    keep = s > PINV_RTOL * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    pinv = (Vh[keep].conj().T / s[keep]) @ U[:, keep].conj().T
    return A_M @ pinv, bool(keep.sum() < A_N.shape[0])


def estimate_C_plain(A_M, A_N):
    """``C = A_M pinv(A_N)``; rank deficiency is flagged, not fatal."""
    A_M, A_N = _check_pair(A_M, A_N)
    if A_N.shape[1] < A_N.shape[0]:
        warnings.warn("fewer descriptors than basis functions: functional map is underdetermined",
                      stacklevel=2)
    C, deficient = pinv_solve(A_M, A_N)
    return FunctionalMap(C, 0.0, deficient)


def penalty_masks(evals_M, evals_N, normalize=True):
    """``D[i, j] = (lam_N[j] - lam_M[i])**2``: the commutativity weight of ``C_ij``."""
    lm = _spectra(evals_M, normalize)
    ln = _spectra(evals_N, normalize)
    return (ln[None, :] - lm[:, None]) ** 2


def solve_rows(K, masks, lam, rhs):
    """Solve ``(K + lam diag(masks[i])) x_i = rhs[:, i]`` for every row ``i``.

    ``K`` is Hermitian positive semidefinite; rows are independent and are
    solved by Cholesky.  Returns the solutions stacked as columns.
    """
    k = masks.shape[0]
    out = np.empty((K.shape[0], k), dtype=np.result_type(K, rhs))
    for i in range(k):
        A = K + lam * np.diag(masks[i])
        try:
            cho = sla.cho_factor(A, check_finite=True)
        except (sla.LinAlgError, ValueError) as exc:
            raise SolveError(f"regularized system is singular ({exc})", row=i) from None
        out[:, i] = sla.cho_solve(cho, rhs[:, i])
    if not np.all(np.isfinite(out)):
        raise SolveError("non-finite solution")
    return out


def estimate_C_regularized(A_M, A_N, evals_M, evals_N, opts=FmapOptions()):
    """Closed-form minimiser of ``|C A_N - A_M|^2 + lam |C L_N - L_M C|^2``.

    The commutativity term is diagonal in the entries of ``C``, so each row
    ``c_i`` solves ``(A_N A_N^T + lam D_i) c_i = A_N a_i`` independently.
    """
    A_M, A_N = _check_pair(A_M, A_N)
    if len(evals_M) != A_M.shape[0] or len(evals_N) != A_N.shape[0]:
        raise DimensionError("spectra do not match coefficient rows")
    if opts.lam == 0:
        C, deficient = pinv_solve(A_M, A_N)
        return FunctionalMap(C, 0.0, deficient)
    masks = penalty_masks(evals_M, evals_N, opts.use_normalized_spectra)
    K = A_N @ A_N.T
    C = solve_rows(K, masks, opts.lam, A_N @ A_M.T).T
    return FunctionalMap(C, opts.lam, False)


def loss_ortho_C(C):
    """``|C^T C - I|_F^2`` and its gradient ``4 C (C^T C - I)``."""
    C = np.asarray(C, dtype=float)
    if C.shape[0] != C.shape[1]:
        raise DimensionError("orthogonality loss needs a square map")
    E = C.T @ C - np.eye(C.shape[1])
    return float(np.sum(E * E)), 4.0 * C @ E


def loss_iso_C(C, evals_M, evals_N, normalize=True):
    """``|C L_N - L_M C|_F^2`` for diagonal spectra, with gradient."""
    C = np.asarray(C, dtype=float)
    D = penalty_masks(evals_M, evals_N, normalize)
    if D.shape != C.shape:
        raise DimensionError(f"spectra give {D.shape}, map is {C.shape}")
    return float(np.sum(D * C * C)), 2.0 * D * C


def save_fmap(fmap, path):
    """Text header ``k_M k_N lam`` then row-major little-endian float64."""
    C = np.ascontiguousarray(fmap.C, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(f"{C.shape[0]} {C.shape[1]} {fmap.lam!r}\n".encode("ascii"))
        fh.write(C.tobytes())


def load_fmap(path):
    with open(path, "rb") as fh:
        head = fh.readline().decode("ascii").split()
        km, kn, lam = int(head[0]), int(head[1]), float(head[2])
        C = np.frombuffer(fh.read(), dtype="<f8").reshape(km, kn).copy()
    return FunctionalMap(C, lam)
