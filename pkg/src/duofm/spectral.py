"""Truncated generalized eigenbases of the Laplace-Beltrami and connection Laplacians."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigs, eigsh

from .errors import ConvergenceError, DimensionError, FactorizationError

SHIFT = -1e-8
K_C = 50
K_Q = 20


def _mass_diag(mass):
    return mass.diagonal() if sp.issparse(mass) else np.asarray(mass, dtype=float)


@dataclass(frozen=True, eq=False)
class RealSpectralBasis:
    """M-orthonormal eigenvectors ``evecs`` (n, k) with eigenvalues ``evals``."""

    evecs: np.ndarray
    evals: np.ndarray
    mass: np.ndarray

    @property
    def k(self):
        return self.evecs.shape[1]

    @property
    def evals_normalized(self):
        return self.evals / self.evals[-1]


@dataclass(frozen=True, eq=False)
class ComplexSpectralBasis:
    evecs: np.ndarray
    evals: np.ndarray
    mass: np.ndarray

    @property
    def k(self):
        return self.evecs.shape[1]

    @property
    def evals_normalized(self):
        return self.evals / self.evals[-1]


def _start_vector(m, dtype):
    v0 = np.ones(len(m), dtype=dtype)
    return v0 / np.sqrt(m.sum())


def _rayleigh_ritz(A, m, V):
    """M-orthonormalise the Ritz block and re-diagonalise inside it."""
    B = V.conj().T @ (m[:, None] * V)
    B = 0.5 * (B + B.conj().T)
    R = sla.cholesky(B)
    V = sla.solve_triangular(R, V.T, trans="T").T if np.isrealobj(V) else V @ sla.inv(R)
    H = V.conj().T @ (A @ V)
    H = 0.5 * (H + H.conj().T)
    w, Z = sla.eigh(H)
    return w, V @ Z


def _fix_sign(V):
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def _fix_phase(V):
    idx = np.argmax(np.abs(V), axis=0)
    p = V[idx, np.arange(V.shape[1])]
    return V * (np.abs(p) / p)


def _check_request(A, mass, k):
    n = A.shape[0]
    if A.shape != (n, n) or len(_mass_diag(mass)) != n:
        raise DimensionError("operator and mass matrix sizes differ")
    if not 1 <= k < n - 1:
        raise DimensionError(f"requested {k} eigenpairs from an operator of size {n}")


def eigensolve_lb(stiffness, mass, k=K_C):
    """Smallest ``k`` generalized eigenpairs of ``W phi = lambda M phi``.

    Shift-invert Lanczos (ARPACK) around ``SHIFT``, then a Rayleigh-Ritz
    cleanup that restores exact M-orthonormality inside eigenvalue clusters.
    Each vector's largest-magnitude entry is made positive.
    """
    _check_request(stiffness, mass, k)
    m = _mass_diag(mass)
    M = sp.diags(m).tocsc()
    try:
        w, V = eigsh(stiffness.tocsc(), k=k, M=M, sigma=SHIFT, which="LM",
                     v0=_start_vector(m, float), maxiter=50 * k, tol=0)
    except ArpackNoConvergence as exc:
        raise ConvergenceError(f"Lanczos did not converge in {50 * k} iterations") from exc
    except RuntimeError as exc:
        raise FactorizationError(f"shifted stiffness factorization failed: {exc}") from exc
    w, V = _rayleigh_ritz(stiffness, m, V)
    order = np.argsort(w, kind="stable")
    return RealSpectralBasis(_fix_sign(V[:, order]), w[order], m)


def eigensolve_connection(connection, mass, k=K_Q):
    """Smallest ``k`` eigenpairs of the Hermitian pencil ``(L, M)``.

    Phase gauge: each eigenvector's largest-magnitude entry is real positive.
    """
    _check_request(connection, mass, k)
    m = _mass_diag(mass)
    M = sp.diags(m.astype(complex)).tocsc()
    try:
        w, V = eigs(connection.tocsc(), k=k, M=M, sigma=SHIFT, which="LM",
                    v0=_start_vector(m, complex), maxiter=50 * k, tol=0)
    except ArpackNoConvergence as exc:
        raise ConvergenceError(f"Arnoldi did not converge in {50 * k} iterations") from exc
    except RuntimeError as exc:
        raise FactorizationError(f"shifted connection factorization failed: {exc}") from exc
    w, V = _rayleigh_ritz(connection, m, V)
    order = np.argsort(w, kind="stable")
    return ComplexSpectralBasis(_fix_phase(V[:, order]), w[order], m)


def residuals(operator, basis):
    """Columnwise backward error ``|A v - l M v| / ((|A| + |l| |M|) |v|)``."""
    m = basis.mass
    V = basis.evecs
    R = operator @ V - (m[:, None] * V) * basis.evals[None, :]
    anorm = sp.linalg.norm(operator, np.inf)
    scale = (anorm + np.abs(basis.evals) * m.max()) * np.linalg.norm(V, axis=0)
    return np.linalg.norm(R, axis=0) / scale


def project_real(basis, functions):
    """Spectral coefficients ``Phi^T M D`` of real functions (n, d) -> (k, d)."""
    D = np.asarray(functions, dtype=float)
    if D.shape[0] != basis.evecs.shape[0]:
        raise DimensionError(f"functions have {D.shape[0]} rows, basis has {basis.evecs.shape[0]}")
    return basis.evecs.T @ (basis.mass[:, None] * D) if D.ndim == 2 else basis.evecs.T @ (basis.mass * D)


def project_complex(basis, fields):
    """Spectral coefficients ``Psi^H M X`` of tangent fields (n, d) -> (k, d)."""
    X = np.asarray(fields, dtype=complex)
    if X.shape[0] != basis.evecs.shape[0]:
        raise DimensionError(f"fields have {X.shape[0]} rows, basis has {basis.evecs.shape[0]}")
    return basis.evecs.conj().T @ (basis.mass[:, None] * X) if X.ndim == 2 else basis.evecs.conj().T @ (basis.mass * X)
