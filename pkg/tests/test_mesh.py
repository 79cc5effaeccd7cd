import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse.csgraph import dijkstra

from duofm.convert_eval import edge_graph
from duofm.errors import ParseError, TopologyError, UnsupportedFormatError
from duofm.io import load_mesh, save_mesh
from duofm.mesh import (SelfSymmetry, TriangleMesh, generate_blob, generate_icosphere,
                        generate_symmetric_blob, grid_patch, tetrahedron, vertex_areas)

TRIANGLE_OFF = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"


def test_single_triangle_off(tmp_path):
    p = tmp_path / "tri.off"
    p.write_text(TRIANGLE_OFF)
    m = load_mesh(p)
    assert (m.n_vertices, m.n_faces) == (3, 1)
    assert not m.is_closed


def test_tetrahedron_closed_manifold(tmp_path):
    p = tmp_path / "tet.off"
    save_mesh(tetrahedron(), p)
    m = load_mesh(p)
    assert m.is_closed
    assert m.euler_characteristic() == 2
    assert m.signed_volume() > 0


def test_obj_inconsistent_winding(tmp_path):
    p = tmp_path / "strip.obj"
    # faces share edge 1-2 traversed in the same direction
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3\nf 2 3 4\n")
    with pytest.raises(TopologyError):
        load_mesh(p)


def test_non_manifold_edge():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]]
    f = [[0, 1, 2], [1, 0, 3], [0, 1, 4]]
    with pytest.raises(TopologyError, match="non-manifold"):
        TriangleMesh(v, f)


def test_degenerate_face():
    with pytest.raises(TopologyError, match="degenerate"):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    with pytest.raises(TopologyError, match="degenerate"):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 1]])


def test_bad_index():
    with pytest.raises(TopologyError):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])


@pytest.mark.parametrize("text,line", [
    ("OFF\n3 1 0\n0 0 0\n1 0\n0 1 0\n3 0 1 2\n", 4),
    ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n4 0 1 2 2\n", 6),
    ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 x\n", 6),
])
def test_parse_error_line(tmp_path, text, line):
    p = tmp_path / "bad.off"
    p.write_text(text)
    with pytest.raises(ParseError) as exc:
        load_mesh(p)
    assert exc.value.line == line


def test_binary_ply_rejected(tmp_path):
    p = tmp_path / "b.ply"
    p.write_bytes(b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\n"
                  b"property float y\nproperty float z\nelement face 1\n"
                  b"property list uchar int vertex_indices\nend_header\n" + bytes(range(60)))
    with pytest.raises(UnsupportedFormatError):
        load_mesh(p)


@pytest.mark.parametrize("fmt", ["off", "obj", "ply"])
def test_round_trip(tmp_path, fmt):
    m, _ = generate_symmetric_blob(2, 6)
    p = tmp_path / f"m.{fmt}"
    save_mesh(m, p)
    back = load_mesh(p)
    np.testing.assert_allclose(back.vertices, m.vertices, rtol=0, atol=1e-9)
    np.testing.assert_array_equal(back.faces, m.faces)


def test_icosphere_counts():
    m = generate_icosphere(0, 1.0)
    assert (m.n_vertices, m.n_faces) == (12, 20)
    m = generate_icosphere(3, 1.0)
    assert (m.n_vertices, m.n_faces) == (642, 1280)
    assert m.n_vertices == 10 * 4**3 + 2
    assert m.euler_characteristic() == 2


def test_icosphere_radius():
    m = generate_icosphere(1, 2.0)
    np.testing.assert_allclose(np.linalg.norm(m.vertices, axis=1), 2.0, atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_blob_symmetry(seed):
    m, sym = generate_symmetric_blob(seed, 6)
    assert sym.orientation == -1
    assert sym.maps_faces_to_faces()
    np.testing.assert_array_equal(sym.permutation[sym.permutation], np.arange(m.n_vertices))
    assert m.euler_characteristic() == 2
    assert m.is_closed


def test_blob_symmetry_preserves_edge_graph(small_blob):
    m, sym = small_blob
    G = edge_graph(m)
    T = sym.permutation
    P = G[T][:, T]
    assert abs(P - G).max() == 0.0
    src = np.arange(0, m.n_vertices, 37)
    D = dijkstra(G, indices=src)
    DT = dijkstra(G, indices=T[src])
    np.testing.assert_array_equal(DT[:, T], D)


def test_blob_mirrored_volume():
    m, sym = generate_symmetric_blob(7, 10)
    assert 900 <= m.n_vertices <= 1100
    mirrored = TriangleMesh(m.vertices, sym.mapped_faces(), validate=False)
    assert abs(mirrored.signed_volume() - m.signed_volume()) <= 1e-12


def test_asymmetric_blob_closed():
    m = generate_blob(4, 6)
    assert m.is_closed and m.euler_characteristic() == 2


def test_symmetry_rejects_non_bijection(small_blob):
    m, sym = small_blob
    p = sym.permutation.copy()
    p[0] = p[1]
    with pytest.raises(TopologyError):
        SelfSymmetry(m, p)


def test_vertex_areas_triangle():
    m = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    np.testing.assert_allclose(vertex_areas(m), 1 / 6, atol=1e-15)


def test_vertex_areas_sphere(sphere3):
    a = vertex_areas(sphere3).sum()
    assert a < 4 * np.pi
    assert abs(a - 4 * np.pi) / (4 * np.pi) < 0.01


def test_vertex_areas_tetrahedron():
    np.testing.assert_allclose(vertex_areas(tetrahedron(1.0)), np.sqrt(3) / 4, atol=1e-14)


def test_mesh_immutable(sphere3):
    with pytest.raises(ValueError):
        sphere3.vertices[0, 0] = 5.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_relabeling_keeps_geometry(seed):
    m = grid_patch(4, 3)
    perm = np.random.default_rng(seed).permutation(m.n_vertices)
    r = m.relabeled(perm)
    np.testing.assert_array_equal(r.vertices[perm], m.vertices)
    np.testing.assert_allclose(vertex_areas(r)[perm], vertex_areas(m), atol=1e-15)
    assert abs(r.area - m.area) < 1e-12
