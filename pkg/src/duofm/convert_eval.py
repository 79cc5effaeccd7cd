"""Point-to-point maps from C and Q, orientation votes and geodesic evaluation."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .errors import DimensionError, DisconnectedError
from .refine import TrainConfig, make_pair, total_loss

METHODS = ("row_nn_C", "dirac_div_Q")
PMF_MAX = 0.25
PMF_STEPS = 100
VOTE = 0.9


@dataclass(frozen=True, eq=False)
class PointMap:
    """``indices[i]`` is the target vertex matched to source vertex ``i``."""

    indices: np.ndarray
    method: str
    orientation: int = 0

    def with_orientation(self, sign):
        return PointMap(self.indices, self.method, int(sign))

    def accuracy(self, truth):
        return float(np.mean(self.indices == np.asarray(truth)))


def _sqdist(q, data):
    return np.sum((q - data) ** 2, axis=-1)


def brute_force_nearest(query, data, block=256):
    """O(n^2) scan; ``argmin`` returns the lowest index among ties."""
    query = np.ascontiguousarray(query, dtype=float)
    data = np.ascontiguousarray(data, dtype=float)
    out = np.empty(len(query), dtype=np.int64)
    for s in range(0, len(query), block):
        q = query[s:s + block]
        out[s:s + block] = np.argmin(_sqdist(q[:, None, :], data[None, :, :]), axis=1)
    return out


def nearest_rows(query, data):
    """Nearest row of ``data`` for every row of ``query``, ties to the lowest index.

    A k-d tree supplies the nearest distance; all rows within a hair of it
    are re-scored with the same arithmetic as :func:`brute_force_nearest`.
    """
    query = np.ascontiguousarray(query, dtype=float)
    data = np.ascontiguousarray(data, dtype=float)
    if query.ndim != 2 or data.ndim != 2 or query.shape[1] != data.shape[1]:
        raise DimensionError(f"cannot match rows of {query.shape} against {data.shape}")
    tree = cKDTree(data)
    dist, idx = tree.query(query, k=1)
    out = np.asarray(idx, dtype=np.int64)
    radius = dist * (1 + 1e-9) + 1e-300
    for i, cands in enumerate(tree.query_ball_point(query, radius)):
        if len(cands) > 1:
            cands = np.sort(np.asarray(cands))
            out[i] = cands[np.argmin(_sqdist(query[i][None, :], data[cands]))]
    return out


def p2p_from_C(C, evecs_M, evecs_N):
    """Match rows of ``Phi_M C`` to rows of ``Phi_N``."""
    C = C.C if hasattr(C, "C") else np.asarray(C)
    if evecs_M.shape[1] != C.shape[0] or evecs_N.shape[1] != C.shape[1]:
        raise DimensionError(f"map {C.shape} does not fit bases {evecs_M.shape}, {evecs_N.shape}")
    return PointMap(nearest_rows(evecs_M @ C, evecs_N), "row_nn_C")


def q_embeddings(Q, evecs_M, evecs_N, div_M, div_N):
    """Real embeddings whose nearest-row matching extracts the Q-induced map."""
    Q = Q.Q if hasattr(Q, "Q") else np.asarray(Q)
    if evecs_M.shape[1] != Q.shape[1] or evecs_N.shape[1] != Q.shape[0]:
        raise DimensionError(f"map {Q.shape} does not fit bases {evecs_M.shape}, {evecs_N.shape}")
    return div_M @ evecs_M, div_N @ (evecs_N @ Q)


def p2p_from_Q(Q, evecs_M, evecs_N, div_M, div_N):
    """Match rows of ``div_M Psi_M`` to rows of ``div_N (Psi_N Q)``."""
    src, dst = q_embeddings(Q, evecs_M, evecs_N, div_M, div_N)
    return PointMap(nearest_rows(src, dst), "dirac_div_Q")


def orientation_sign(pmap, source, target, vote=VOTE):
    """+1 if mapped faces keep the target's outward winding, -1 if reversed, else 0.

    Each source face is pushed to the triangle spanned by its image
    vertices (in source order).  That triangle's normal is compared with
    the summed vertex normals of the target at the image vertices.  Faces
    whose image repeats a vertex or has zero area do not vote.
    """
    idx = np.asarray(pmap.indices if isinstance(pmap, PointMap) else pmap)
    if len(idx) != source.n_vertices:
        raise DimensionError("point map length differs from the source vertex count")
    f = idx[source.faces]
    ok = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    f = f[ok]
    v = target.vertices
    nrm = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    ref = target.vertex_normals[f].sum(axis=1)
    s = np.einsum("ij,ij->i", nrm, ref)
    s = s[s != 0]
    if len(s) == 0:
        return 0
    agree = np.mean(s > 0)
    if agree >= vote:
        return 1
    if 1 - agree >= vote:
        return -1
    return 0


def edge_graph(mesh):
    e = mesh.edges
    w = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    n = mesh.n_vertices
    return sp.csr_matrix((np.r_[w, w], (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n))


def geodesic_distances(mesh, sources):
    """Edge-graph Dijkstra distances, one row per source vertex."""
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    D = dijkstra(edge_graph(mesh), directed=False, indices=sources)
    D = np.atleast_2d(D)
    bad = np.nonzero(~np.isfinite(D).all(axis=0))[0]
    if len(bad):
        raise DisconnectedError(f"{len(bad)} vertices unreachable from the sources", vertices=bad.tolist())
    return D


@dataclass(frozen=True, eq=False)
class EvalReport:
    mean_error: float
    thresholds: np.ndarray
    pmf: np.ndarray
    n: int
    errors: np.ndarray

    def to_json(self):
        doc = {
            "mean_error_x100": self.mean_error,
            "n_evaluated": self.n,
            "normalization": "sqrt_area",
            "pmf_thresholds": [float(t) for t in self.thresholds],
            "pmf_fraction": [float(p) for p in self.pmf],
        }
        return json.dumps(doc, indent=1)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")


def evaluate(pmap, truth, target, vertices=None):
    """Normalized geodesic errors of a point map against ground-truth images."""
    idx = np.asarray(pmap.indices if isinstance(pmap, PointMap) else pmap)
    truth = np.asarray(truth)
    if idx.shape != truth.shape:
        raise DimensionError("ground truth does not cover the point map")
    if vertices is not None:
        idx, truth = idx[vertices], truth[vertices]
    srcs, inv = np.unique(truth, return_inverse=True)
    D = geodesic_distances(target, srcs)
    err = D[inv, idx] / np.sqrt(target.area)
    thresholds = np.linspace(0.0, PMF_MAX, PMF_STEPS)
    pmf = np.searchsorted(np.sort(err), thresholds, side="right") / len(err)
    return EvalReport(float(err.mean() * 100), thresholds, pmf, len(err), err)


def save_pointmap(pmap, path):
    with open(path, "w") as fh:
        fh.write(f"#duo-p2p v1 n={len(pmap.indices)} method={pmap.method} orientation={pmap.orientation}\n")
        fh.write("\n".join(str(int(i)) for i in pmap.indices) + "\n")


def load_pointmap(path):
    with open(path) as fh:
        head = fh.readline().split()
        if not head or head[0] != "#duo-p2p" or head[1] != "v1":
            raise ValueError(f"{path}: not a point-map file")
        meta = dict(tok.split("=", 1) for tok in head[2:])
        idx = np.array([int(line) for line in fh if line.strip()], dtype=np.int64)
    if len(idx) != int(meta["n"]):
        raise ValueError(f"{path}: header says n={meta['n']}, found {len(idx)} entries")
    return PointMap(idx, meta["method"], int(meta["orientation"]))


@dataclass
class AmbiguityReport:
    direct_intrinsic: tuple
    mirrored_intrinsic: tuple
    direct_q: tuple
    mirrored_q: tuple

    @property
    def intrinsic_rel_diff(self):
        a, b = np.array(self.direct_intrinsic), np.array(self.mirrored_intrinsic)
        return float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))

    @property
    def q_margin(self):
        return self.mirrored_q[0] - self.direct_q[0]


def symmetry_ambiguity_probe(shape_M, shape_N, X_M, X_N, symmetry, W=None, cfg=TrainConfig()):
    """Losses of the direct pair and of the pair with N's features composed with T."""
    X_N = X_N.values if hasattr(X_N, "values") else np.asarray(X_N)
    X_M = X_M.values if hasattr(X_M, "values") else np.asarray(X_M)
    if W is None:
        W = np.eye(X_M.shape[1])
    perm = symmetry.permutation if hasattr(symmetry, "permutation") else np.asarray(symmetry)
    direct = total_loss(make_pair(shape_M, shape_N, X_M, X_N), W, cfg)[1]
    mirrored = total_loss(make_pair(shape_M, shape_N, X_M, X_N[perm]), W, cfg)[1]

    def tup(d, keys):
        return tuple(float(d[k]) for k in keys)

    return AmbiguityReport(tup(direct, ("L_ortho", "L_iso")), tup(mirrored, ("L_ortho", "L_iso")),
                           tup(direct, ("L_q_ortho", "L_q_iso")), tup(mirrored, ("L_q_ortho", "L_q_iso")))
