"""Triangle meshes, validation, synthetic shapes and basic geometry."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .errors import GenerationError, TopologyError

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Immutable triangle mesh.

    ``faces`` are wound counter-clockwise when seen from outside; that
    winding defines the surface orientation used by every tangent-space
    construction downstream.
    """

    vertices: np.ndarray
    faces: np.ndarray
    name: str | None = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        v = _frozen(self.vertices, np.float64)
        f = _frozen(self.faces, np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise TopologyError(f"vertices must be (n, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise TopologyError(f"faces must be (f, 3), got {f.shape}")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.validate:
            validate_mesh(self)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    @cached_property
    def edges(self):
        """Unique undirected edges as sorted (i, j) pairs, i < j."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        e = np.unique(e, axis=0)
        e.setflags(write=False)
        return e

    @cached_property
    def face_normals(self):
        """Unnormalised face normals (length = twice the face area)."""
        v = self.vertices
        f = self.faces
        return np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])

    @cached_property
    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_normals, axis=1)

    @cached_property
    def vertex_normals(self):
        """Area-weighted average of incident face normals, unit length."""
        n = np.zeros_like(self.vertices)
        fn = self.face_normals
        for k in range(3):
            np.add.at(n, self.faces[:, k], fn)
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        norm[norm == 0] = 1.0
        return n / norm

    @property
    def area(self):
        return float(self.face_areas.sum())

    @property
    def is_closed(self):
        return not np.any(boundary_edges(self))

    def euler_characteristic(self):
        return self.n_vertices - len(self.edges) + self.n_faces

    def signed_volume(self):
        v = self.vertices
        f = self.faces
        return float(np.einsum("ij,ij->i", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]])).sum() / 6.0)

    def transformed(self, rotation=None, translation=None, scale=1.0, name=None):
        """Copy with vertices mapped by ``scale * R x + t``; connectivity kept."""
        v = self.vertices * scale
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=float)
        return TriangleMesh(v, self.faces, name=name or self.name, validate=False)

    def relabeled(self, perm, face_order=None, name=None):
        """Copy whose vertex ``perm[i]`` is this mesh's vertex ``i``.

        ``face_order`` optionally reorders the face list as well; each face
        keeps its winding but may start at a different corner.
        """
        perm = np.asarray(perm)
        v = np.empty_like(self.vertices)
        v[perm] = self.vertices
        f = perm[self.faces]
        if face_order is not None:
            f = f[np.asarray(face_order)]
            f = np.roll(f, 1, axis=1)
        return TriangleMesh(v, f, name=name or self.name, validate=False)


def boundary_edges(mesh):
    f = mesh.faces
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e.sort(axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return counts == 1


def validate_mesh(mesh, area_tol=1e-14):
    """Raise TopologyError unless the mesh is a valid oriented 2-manifold."""
    v, f = mesh.vertices, mesh.faces
    n = v.shape[0]
    if f.size and (f.min() < 0 or f.max() >= n):
        bad = int(np.nonzero((f < 0).any(1) | (f >= n).any(1))[0][0])
        raise TopologyError(f"face {bad} references a vertex outside [0, {n})")
    if not np.all(np.isfinite(v)):
        raise TopologyError("non-finite vertex coordinates")
    repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])
    if repeated.any():
        raise TopologyError(f"degenerate face {int(np.nonzero(repeated)[0][0])}: repeated vertex index")
    scale = max(float(np.ptp(v, axis=0).max()), 1e-300) if n else 1.0
    areas = 0.5 * np.linalg.norm(np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1)
    tiny = areas <= area_tol * scale**2
    if tiny.any():
        raise TopologyError(f"degenerate face {int(np.nonzero(tiny)[0][0])}: zero area")

    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    owner = np.tile(np.arange(len(f)), 3)
    und = np.sort(directed, axis=1)
    _, inv, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if np.any(counts > 2):
        k = int(np.nonzero(counts[inv] > 2)[0][0])
        i, j = und[k]
        raise TopologyError(f"non-manifold edge ({i}, {j}) shared by {counts[inv[k]]} faces")
    _, dcounts = np.unique(directed, axis=0, return_counts=True)
    if np.any(dcounts > 1):
        uniq, first, dc = np.unique(directed, axis=0, return_index=True, return_counts=True)
        k = first[np.nonzero(dc > 1)[0][0]]
        i, j = directed[k]
        raise TopologyError(
            f"inconsistent winding: edge ({i}, {j}) traversed in the same direction by faces "
            f"including {owner[k]}"
        )
    _check_vertex_fans(n, f)


def _check_vertex_fans(n, faces):
    # each vertex's incident faces must form one fan (a path or a cycle)
    nxt = [dict() for _ in range(n)]
    for a, b, c in faces.tolist():
        nxt[a][b] = c
        nxt[b][c] = a
        nxt[c][a] = b
    for i, m in enumerate(nxt):
        if not m:
            continue
        targets = set(m.values())
        starts = [j for j in m if j not in targets]
        start = starts[0] if starts else next(iter(m))
        seen = 1
        j = m[start]
        while j in m and j != start:
            j = m[j]
            seen += 1
            if seen > len(m):
                break
        if seen != len(m) or len(starts) > 1:
            raise TopologyError(f"non-manifold vertex {i}: incident faces form more than one fan")


def vertex_areas(mesh):
    """Barycentric lumped area: one third of each incident face area."""
    a = np.zeros(mesh.n_vertices)
    fa = mesh.face_areas / 3.0
    for k in range(3):
        np.add.at(a, mesh.faces[:, k], fa)
    return a


@dataclass(frozen=True, eq=False)
class SelfSymmetry:
    """Vertex permutation realising an isometric self-map of a mesh."""

    mesh: TriangleMesh
    permutation: np.ndarray
    orientation: int = -1

    def __post_init__(self):
        p = _frozen(self.permutation, np.int64)
        object.__setattr__(self, "permutation", p)
        n = self.mesh.n_vertices
        if p.shape != (n,) or not np.array_equal(np.sort(p), np.arange(n)):
            raise TopologyError("symmetry permutation is not a bijection on vertex indices")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")

    def mapped_faces(self):
        """Faces pushed through the permutation, winding restored when reversing."""
        f = self.permutation[self.mesh.faces]
        if self.orientation < 0:
            f = f[:, ::-1]
        return f

    def maps_faces_to_faces(self):
        return _face_keys(self.mapped_faces()) == _face_keys(self.mesh.faces)


def _face_keys(faces):
    # cyclic rotation so the smallest index comes first; keeps winding
    f = np.asarray(faces)
    r = np.argmin(f, axis=1)
    idx = (r[:, None] + np.arange(3)[None, :]) % 3
    rot = np.take_along_axis(f, idx, axis=1)
    return set(map(tuple, rot.tolist()))


# ---------------------------------------------------------------- generators

def _icosahedron():
    t = GOLDEN
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def generate_icosphere(subdivisions=0, radius=1.0):
    """Loop-free midpoint subdivision of the icosahedron, projected to a sphere."""
    if not 0 <= int(subdivisions) <= 6:
        raise ValueError("subdivisions must lie in [0, 6]")
    if radius <= 0:
        raise ValueError("radius must be positive")
    v, f = _icosahedron()
    verts = list(v)
    for _ in range(int(subdivisions)):
        cache = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in f.tolist():
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        f = np.array(nf)
    v = np.array(verts)
    v = radius * v / np.linalg.norm(v, axis=1, keepdims=True)
    return TriangleMesh(v, f, name=f"icosphere_{int(subdivisions)}")


def _geodesic_sphere(freq):
    """Class-I geodesic sphere: each icosahedron face split into freq^2 triangles."""
    base, bf = _icosahedron()
    index = {}
    verts = []

    def vid(key, p):
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    def point(face, i, j):
        # barycentric lattice point (i, j) with k = freq - i - j on corners (a, b, c)
        a, b, c = face
        k = freq - i - j
        weights = {a: k, b: i, c: j}
        nz = sorted((w, u) for u, w in weights.items() if w > 0)
        if len(nz) == 1:
            u = nz[0][1]
            return vid(("v", u), base[u])
        if len(nz) == 2:
            (_, u), (_, w) = sorted(nz, key=lambda t: t[1])
            s = weights[w]
            return vid(("e", u, w, s), base[u] + (base[w] - base[u]) * (s / freq))
        key = ("f", tuple(sorted(face)), tuple(weights[u] for u in sorted(face)))
        return vid(key, (k * base[a] + i * base[b] + j * base[c]) / freq)

    faces = []
    for face in bf.tolist():
        grid = {}
        for i in range(freq + 1):
            for j in range(freq + 1 - i):
                grid[i, j] = point(face, i, j)
        for i in range(freq):
            for j in range(freq - i):
                faces.append([grid[i, j], grid[i + 1, j], grid[i, j + 1]])
                if i + j < freq - 1:
                    faces.append([grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1]])
    v = np.array(verts)
    return v / np.linalg.norm(v, axis=1, keepdims=True), np.array(faces)


def _mirror_permutation(v, tol=1e-9):
    mirrored = v * np.array([-1.0, 1.0, 1.0])
    dist, perm = cKDTree(v).query(mirrored)
    if dist.max() > tol or not np.array_equal(perm[perm], np.arange(len(v))):
        raise GenerationError("base sphere is not mirror symmetric")
    return perm


def _bump_field(dirs, rng, symmetric, n_bumps=7):
    centers = rng.normal(size=(n_bumps, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    amps = rng.uniform(0.12, 0.32, n_bumps) * rng.choice([-0.6, 1.0], n_bumps)
    widths = rng.uniform(0.3, 0.55, n_bumps)
    h = np.zeros(len(dirs))
    for c, a, s in zip(centers, amps, widths):
        h += a * np.exp(-np.sum((dirs - c) ** 2, axis=1) / (2 * s * s))
        if symmetric:
            cm = c * np.array([-1.0, 1.0, 1.0])
            h += a * np.exp(-np.sum((dirs - cm) ** 2, axis=1) / (2 * s * s))
    # a mild ellipsoidal stretch separates near-degenerate eigenvalue clusters
    stretch = np.array([1.0, 1.12, 0.86]) if symmetric else rng.uniform(0.85, 1.2, 3)
    return (1.0 + h)[:, None] * dirs * stretch


def _well_shaped(v, f, min_angle=0.05):
    e0 = v[f[:, 1]] - v[f[:, 0]]
    e1 = v[f[:, 2]] - v[f[:, 0]]
    normals = np.cross(e0, e1)
    centroid = v[f].mean(axis=1)
    if np.any(np.einsum("ij,ij->i", normals, centroid) <= 0):
        return False
    for k in range(3):
        a = v[f[:, (k + 1) % 3]] - v[f[:, k]]
        b = v[f[:, (k + 2) % 3]] - v[f[:, k]]
        cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        if np.any(np.arccos(np.clip(cos, -1, 1)) < min_angle):
            return False
    return True


def _blob(seed, resolution, symmetric):
    resolution = int(resolution)
    if resolution < 1 or 10 * resolution**2 + 2 > 5000:
        raise ValueError("resolution must give between 12 and 5000 vertices")
    dirs, faces = _geodesic_sphere(resolution)
    perm = None
    if symmetric:
        perm = _mirror_permutation(dirs)
        # exact mirror: the x >= 0 half is authoritative, the other half is its reflection
        keep = (dirs[:, 0] > 0) | (perm == np.arange(len(dirs)))
        dirs = dirs.copy()
        dirs[perm == np.arange(len(dirs)), 0] = 0.0
        dirs[~keep] = dirs[perm[~keep]] * np.array([-1.0, 1.0, 1.0])
    for attempt in range(10):
        rng = np.random.default_rng([int(seed), attempt])
        v = _bump_field(dirs, rng, symmetric)
        if symmetric:
            v[~keep] = v[perm[~keep]] * np.array([-1.0, 1.0, 1.0])
            v[perm == np.arange(len(v)), 0] = 0.0
        if _well_shaped(v, faces):
            return v, faces, perm
    raise GenerationError(f"seed {seed}: bumps produced a folded surface in 10 attempts")


def generate_symmetric_blob(seed, resolution=10):
    """Closed genus-0 bumpy sphere with an exact mirror symmetry about x = 0.

    ``resolution`` is the geodesic subdivision frequency, giving
    ``10 * resolution**2 + 2`` vertices (resolution 10 -> 1002).  Returns the
    mesh and the orientation-reversing :class:`SelfSymmetry`.
    """
    v, f, perm = _blob(seed, resolution, symmetric=True)
    mesh = TriangleMesh(v, f, name=f"blob_{int(seed):04d}")
    sym = SelfSymmetry(mesh, perm, orientation=-1)
    if not sym.maps_faces_to_faces():
        raise GenerationError("mirror permutation does not map faces to reversed faces")
    return mesh, sym


def generate_blob(seed, resolution=10):
    """Asymmetric bumpy sphere (no nontrivial isometry), same vertex counts."""
    v, f, _ = _blob(seed, resolution, symmetric=False)
    return TriangleMesh(v, f, name=f"blob_asym_{int(seed):04d}")


def grid_patch(nx, ny, spacing=1.0):
    """Flat rectangular grid in the z = 0 plane, each cell split in two."""
    xs, ys = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing, indexing="xy")
    v = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(nx * ny)])
    faces = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            a = j * nx + i
            b, c, d = a + 1, a + nx, a + nx + 1
            faces += [[a, b, d], [a, d, c]]
    return TriangleMesh(v, np.array(faces), name=f"grid_{nx}x{ny}")


def tetrahedron(edge=1.0):
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    v *= edge / (2 * np.sqrt(2))
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return TriangleMesh(v, f, name="tetrahedron")
