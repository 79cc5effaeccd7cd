"""Per-shape bundle of operators, spectral bases and descriptors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .descriptors import WksParams, wks
from .operators import (build_tangent_frames, connection_laplacian, cotan_laplacian,
                        divergence_operator, gradient_operator)
from .spectral import K_C, K_Q, eigensolve_connection, eigensolve_lb


@dataclass(eq=False)
class ShapeData:
    mesh: object
    stiffness: object
    mass: object
    frames: object
    connection: object
    gradient: object
    divergence: object
    lb: object
    conn: object
    wks: object

    @property
    def n(self):
        return self.mesh.n_vertices


def prepare_shape(mesh, k_c=K_C, k_q=K_Q, wks_params=WksParams(), frames=None):
    """Assemble operators, both eigenbases and WKS for one mesh."""
    W, M = cotan_laplacian(mesh)
    if frames is None:
        frames = build_tangent_frames(mesh)
    L = connection_laplacian(mesh, frames, W)
    G = gradient_operator(mesh, frames)
    div = divergence_operator(mesh, frames, M, G)
    lb = eigensolve_lb(W, M, k_c)
    conn = eigensolve_connection(L, M, k_q)
    return ShapeData(mesh, W, M, frames, L, G, div, lb, conn, wks(lb, wks_params))


def random_permutation(n, seed):
    return np.random.default_rng(seed).permutation(n)
