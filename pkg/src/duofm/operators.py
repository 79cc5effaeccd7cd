"""Discrete differential operators on triangle meshes.

Tangent vectors are complex numbers in per-vertex frames: a vector
``a e1 + b e2`` at vertex ``i`` is stored as ``a + 1j*b``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import FrameError, NumericalError, RankError
from .mesh import vertex_areas

MIN_ANGLE = 1e-6


def _corner_angles(mesh):
    v, f = mesh.vertices, mesh.faces
    ang = np.empty(f.shape)
    for k in range(3):
        a = v[f[:, (k + 1) % 3]] - v[f[:, k]]
        b = v[f[:, (k + 2) % 3]] - v[f[:, k]]
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        ang[:, k] = np.arctan2(cross, np.einsum("ij,ij->i", a, b))
    return ang


def _cotangents(mesh):
    v, f = mesh.vertices, mesh.faces
    cot = np.empty(f.shape)
    for k in range(3):
        a = v[f[:, (k + 1) % 3]] - v[f[:, k]]
        b = v[f[:, (k + 2) % 3]] - v[f[:, k]]
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        cot[:, k] = np.einsum("ij,ij->i", a, b) / cross
    return cot


def cotan_laplacian(mesh):
    """Cotangent stiffness ``W`` (PSD, zero row sums) and lumped mass ``M``.

    ``W_ij = -(cot a_ij + cot b_ij) / 2`` on edges.  Both are returned as
    CSR matrices with sorted indices.
    """
    ang = _corner_angles(mesh)
    if ang.min() < MIN_ANGLE:
        bad = int(np.argmin(ang.min(axis=1)))
        raise NumericalError(f"face {bad} is near-degenerate (min angle {ang[bad].min():.3g} rad)")
    cot = _cotangents(mesh)
    f = mesh.faces
    n = mesh.n_vertices
    rows, cols, vals = [], [], []
    for k in range(3):
        i = f[:, (k + 1) % 3]
        j = f[:, (k + 2) % 3]
        w = -0.5 * cot[:, k]
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
    off = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    off.sum_duplicates()
    W = (off - sp.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()
    W.sort_indices()
    M = sp.diags(vertex_areas(mesh)).tocsr()
    return W, M


def edge_weights(stiffness):
    """Positive cotan weights ``w_ij = -W_ij`` on directed edges, as CSR."""
    off = stiffness - sp.diags(stiffness.diagonal())
    off = (-off).tocsr()
    off.eliminate_zeros()
    return off


@dataclass(frozen=True, eq=False)
class TangentFrameField:
    """Per-vertex tangent frames plus the intrinsic layout of each one-ring.

    ``edges`` lists directed one-ring edges ``(i, j)``; ``angles`` holds the
    direction of ``j`` as seen from ``i`` in frame ``i`` (rescaled layout) and
    ``lengths`` the edge length.  ``transport[k]`` rotates a vector
    expressed in frame ``j`` into frame ``i``.
    """

    normals: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    scale: np.ndarray
    edges: np.ndarray
    angles: np.ndarray
    lengths: np.ndarray
    transport: np.ndarray
    orientation: int = 1

    def to_complex(self, vectors):
        """Express ambient 3D tangent vectors (n, 3) in frame coordinates."""
        return np.einsum("ij,ij->i", vectors, self.e1) + 1j * np.einsum("ij,ij->i", vectors, self.e2)

    def to_ambient(self, z):
        z = np.asarray(z)
        return z.real[:, None] * self.e1 + z.imag[:, None] * self.e2

    def transport_matrix(self, n):
        return sp.csr_matrix((self.transport, (self.edges[:, 0], self.edges[:, 1])), shape=(n, n))


def _fans(mesh):
    nxt = [dict() for _ in range(mesh.n_vertices)]
    first = [None] * mesh.n_vertices
    for fi, (a, b, c) in enumerate(mesh.faces.tolist()):
        for i, j, k in ((a, b, c), (b, c, a), (c, a, b)):
            nxt[i][j] = (k, fi)
            if first[i] is None:
                first[i] = j
    return nxt, first


def build_tangent_frames(mesh):
    """Frames and intrinsic one-ring layouts for every vertex.

    ``e1`` is the first incident edge (from the lowest-index incident face)
    projected onto the tangent plane.  Corner angles around interior
    vertices are rescaled to sum to ``2*pi``; boundary vertices keep their
    Euclidean angles.
    """
    n = mesh.n_vertices
    v = mesh.vertices
    normals = mesh.vertex_normals
    corner = _corner_angles(mesh)
    nxt, first = _fans(mesh)
    corner_of = {}
    for fi, face in enumerate(mesh.faces.tolist()):
        for k in range(3):
            corner_of[fi, face[k]] = corner[fi, k]

    src, dst, ang = [], [], []
    scale = np.ones(n)
    start = np.empty(n, dtype=np.int64)
    for i in range(n):
        fan = nxt[i]
        if not fan:
            raise FrameError(f"vertex {i} has no incident face")
        targets = {k for k, _ in fan.values()}
        open_starts = [j for j in fan if j not in targets]
        j0 = open_starts[0] if open_starts else first[i]
        order, cum = [j0], [0.0]
        j = j0
        total = 0.0
        while j in fan:
            k, fi = fan[j]
            total += corner_of[fi, i]
            if k == j0:
                break
            order.append(k)
            cum.append(total)
            j = k
        if total <= 0:
            raise FrameError(f"vertex {i} has zero total incident angle")
        if not open_starts:
            scale[i] = 2 * np.pi / total
        start[i] = j0
        src += [i] * len(order)
        dst += order
        ang += [c * scale[i] for c in cum]

    src = np.array(src, dtype=np.int64)
    dst = np.array(dst, dtype=np.int64)
    ang = np.array(ang)
    lengths = np.linalg.norm(v[dst] - v[src], axis=1)

    d = v[start] - v
    e1 = d - np.einsum("ij,ij->i", d, normals)[:, None] * normals
    norm = np.linalg.norm(e1, axis=1)
    if np.any(norm <= 0):
        raise FrameError(f"vertex {int(np.argmin(norm))}: first edge is parallel to the normal")
    e1 /= norm[:, None]
    e2 = np.cross(normals, e1)

    # angle of i seen from j, looked up through a sparse index of directed edges
    lookup = sp.csr_matrix((np.arange(1, len(src) + 1), (src, dst)), shape=(n, n))
    rev = np.asarray(lookup[dst, src]).ravel() - 1
    if np.any(rev < 0):
        raise FrameError("one-ring adjacency is not symmetric")
    transport = np.empty(len(src), dtype=complex)
    lower = src < dst
    transport[lower] = np.exp(1j * (ang[lower] - ang[rev[lower]] + np.pi))
    transport[~lower] = np.conj(transport[rev[~lower]])
    return TangentFrameField(normals, e1, e2, scale, np.column_stack([src, dst]), ang, lengths, transport)


def conjugate_orientation(frames):
    """Flip the tangent-plane orientation: every complex coordinate is conjugated."""
    return replace(
        frames,
        normals=-frames.normals,
        e2=-frames.e2,
        angles=-frames.angles,
        transport=np.conj(frames.transport),
        orientation=-frames.orientation,
    )


def connection_laplacian(mesh, frames, stiffness=None):
    """Hermitian connection Laplacian ``L_ij = -w_ij r_ij``, ``L_ii = sum_j w_ij``.

    Pairs with the real lumped mass matrix.  Cotan weights are not clamped.
    """
    if stiffness is None:
        stiffness, _ = cotan_laplacian(mesh)
    n = mesh.n_vertices
    i, j = frames.edges[:, 0], frames.edges[:, 1]
    w = -np.asarray(stiffness[i, j]).ravel()
    off = sp.csr_matrix((-w * frames.transport, (i, j)), shape=(n, n))
    L = (off + sp.diags(stiffness.diagonal().astype(complex))).tocsr()
    L.sort_indices()
    return L


def gradient_operator(mesh, frames):
    """Per-vertex least-squares gradient as a complex sparse (n, n) matrix.

    For vertex ``i`` the linear model ``f(j) - f(i) = <g_i, log_i(j)>`` is
    fitted over the one-ring, ``log_i(j)`` being the edge vector in the
    intrinsic layout.  Exact for functions linear on a flat one-ring.
    """
    n = mesh.n_vertices
    i, j = frames.edges[:, 0], frames.edges[:, 1]
    ux = frames.lengths * np.cos(frames.angles)
    uy = frames.lengths * np.sin(frames.angles)
    sxx = np.bincount(i, ux * ux, n)
    sxy = np.bincount(i, ux * uy, n)
    syy = np.bincount(i, uy * uy, n)
    det = sxx * syy - sxy * sxy
    bad = det <= 1e-12 * (sxx + syy) ** 2
    if bad.any():
        raise RankError(f"vertex {int(np.nonzero(bad)[0][0])}: one-ring directions span rank < 2")
    # (U^T U)^{-1} U^T, closed form so orientation flips stay bit-exact
    cx = (syy[i] * ux - sxy[i] * uy) / det[i]
    cy = (sxx[i] * uy - sxy[i] * ux) / det[i]
    coef = cx + 1j * cy
    diag = -np.bincount(i, coef.real, n) - 1j * np.bincount(i, coef.imag, n)
    G = sp.csr_matrix((coef, (i, j)), shape=(n, n)) + sp.diags(diag)
    G = G.tocsr()
    G.sort_indices()
    return G


class DivergenceOperator:
    """Real-valued divergence, the negative mass-weighted adjoint of a gradient.

    ``div X = -M^{-1} Re(G^H M X)`` so that ``<G f, X>_M = -<f, div X>_M``.
    """

    def __init__(self, gradient, mass):
        m = mass.diagonal() if sp.issparse(mass) else np.asarray(mass)
        Minv = sp.diags(1.0 / m)
        Md = sp.diags(m)
        self.real_part = (-(Minv @ gradient.real.T @ Md)).tocsr()
        self.imag_part = (-(Minv @ gradient.imag.T @ Md)).tocsr()
        self.shape = gradient.shape[::-1]

    def __call__(self, fields):
        fields = np.asarray(fields)
        return self.real_part @ fields.real + self.imag_part @ fields.imag

    def __matmul__(self, fields):
        return self(fields)


def divergence_operator(mesh, frames, mass=None, gradient=None):
    if gradient is None:
        gradient = gradient_operator(mesh, frames)
    if mass is None:
        mass = vertex_areas(mesh)
    return DivergenceOperator(gradient, mass)


def inner_vector(X, Y, mass):
    """Mass-weighted real inner product of tangent fields, columnwise."""
    m = mass.diagonal() if sp.issparse(mass) else np.asarray(mass)
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.ndim == 1:
        return float(np.sum(m * (np.conj(X) * Y).real))
    return np.einsum("i,ij->j", m, (np.conj(X) * Y).real)
