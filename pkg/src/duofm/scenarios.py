"""Synthetic pair constructions shared by tests, demos and the CLI."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .descriptors import WksParams, orientation_channels
from .mesh import generate_symmetric_blob
from .operators import build_tangent_frames, conjugate_orientation, gradient_operator
from .refine import make_pair
from .shape import prepare_shape

# rotation by pi about the y axis: x -> -x, z -> -z
FLIP_Y = np.diag([-1.0, 1.0, -1.0])


def _unit_columns(X, mass):
    return X / np.sqrt(mass @ X**2)[None, :]


def feature_stack(shape, n_orient=8, twin=None):
    """WKS, gradient moduli, cosines and sines of relative phases, unit L2(M) columns.

    ``twin`` appends a second copy of the sine channels computed with the
    given orientation (+1 keeps the shape's own frames, -1 conjugates
    them).  With opposite twins on the two shapes of a pair the probe can
    express both the direct and the mirrored correspondence.
    """
    m = shape.lb.mass
    X = np.hstack([shape.wks.values, orientation_channels(shape.wks, shape.gradient, n_orient, m)])
    if twin is not None:
        G = shape.gradient
        if twin < 0:
            frames = shape.frames if shape.frames is not None else build_tangent_frames(shape.mesh)
            G = gradient_operator(shape.mesh, conjugate_orientation(frames))
        sines = orientation_channels(shape.wks, G, n_orient, m)[:, n_orient + (n_orient - 1):]
        X = np.hstack([X, sines])
    return _unit_columns(X, m)


def channel_groups(num_energies, n_orient, twin=True):
    """Column ranges of :func:`feature_stack`."""
    n_pair = n_orient - 1
    g, s = {}, 0
    for name, width in (("wks", num_energies), ("mod", n_orient), ("cos", n_pair), ("sin", n_pair),
                        ("twin", n_pair if twin else 0)):
        g[name] = np.arange(s, s + width)
        s += width
    return g


@dataclass(eq=False)
class TrapPair:
    pair: object
    shape_M: object
    shape_N: object
    X_M: np.ndarray
    X_N: np.ndarray
    truth: np.ndarray
    mirror_truth: np.ndarray
    groups: dict
    symmetry: object


def mirror_trap_pair(seed, resolution=10, k_c=50, k_q=20, wks_params=WksParams(), n_orient=8):
    """Symmetric blob ``M`` against a rotated, relabeled copy ``N``.

    Vertex ``i`` of ``M`` corresponds to ``truth[i]`` on ``N``.  The
    target's twin sine channels are computed with conjugated frames, so a
    probe reading only the twins produces descriptors that agree exactly
    with the mirrored map ``truth[T[i]]``; a probe reading only the regular
    sines agrees with the direct one.  Swapping the two row blocks of a
    probe exchanges the two situations.
    """
    mesh, sym = generate_symmetric_blob(seed, resolution)
    perm = np.random.default_rng(seed + 1000).permutation(mesh.n_vertices)
    other = mesh.transformed(rotation=FLIP_Y).relabeled(perm, name=f"{mesh.name}_rot")
    S_M = prepare_shape(mesh, k_c, k_q, wks_params)
    S_N = prepare_shape(other, k_c, k_q, wks_params)
    X_M = feature_stack(S_M, n_orient, twin=1)
    X_N = feature_stack(S_N, n_orient, twin=-1)
    pair = make_pair(S_M, S_N, X_M, X_N, name=f"trap_{seed}")
    groups = channel_groups(wks_params.num_energies, n_orient)
    return TrapPair(pair, S_M, S_N, X_M, X_N, perm, perm[sym.permutation], groups, sym)


def swap_twin(W, groups):
    """Exchange the probe rows reading the sines and their twins."""
    W = np.array(W, dtype=float)
    W[groups["sin"]], W[groups["twin"]] = W[groups["twin"]].copy(), W[groups["sin"]].copy()
    return W


def adversarial_probe(groups, d, d_out=32, seed=0, bias=1.0):
    """Random probe tilted towards the twin sines.

    The regular sine rows are scaled by ``1 - bias`` and the twin rows by
    ``1 + bias``.  At ``bias = 1`` the descriptors agree exactly with the
    mirrored map, a global minimiser of every orientation-blind loss.
    """
    rng = np.random.default_rng(seed)
    W = rng.normal(scale=1.0 / np.sqrt(d), size=(d, d_out))
    W[groups["sin"]] *= 1.0 - bias
    W[groups["twin"]] *= 1.0 + bias
    return W
