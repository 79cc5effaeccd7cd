import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from duofm.descriptors import (DescriptorSet, WksParams, apply_probe, base_features, load_descriptors,
                               orientation_channels, save_descriptors, wks)
from duofm.errors import DimensionError
from duofm.operators import build_tangent_frames, conjugate_orientation, gradient_operator
from duofm.shape import prepare_shape


def test_default_dimension(blob_shape):
    assert WksParams().num_energies == 128
    assert blob_shape.wks.d == 128


def test_rigid_motion_invariance(small_blob, small_shape):
    m = small_blob[0]
    c, s = np.cos(0.7), np.sin(0.7)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    moved = prepare_shape(m.transformed(R, translation=[3.0, -1.0, 2.0]), k_c=20, k_q=10)
    np.testing.assert_allclose(moved.wks.values, small_shape.wks.values, rtol=1e-6, atol=1e-9)


def test_symmetry_invariance(blob, blob_shape):
    T = blob[1].permutation
    v = blob_shape.wks.values
    np.testing.assert_allclose(v[T], v, rtol=1e-6, atol=1e-12 * v.max())


def test_nonnegative_and_bounded(blob_shape):
    v = blob_shape.wks.values
    assert v.min() >= 0
    # Gaussian weights sum to one per energy, and sum_k phi_k(x)^2 <= 1 / m_x
    assert np.all(v * blob_shape.lb.mass[:, None] <= 1 + 1e-12)


def test_permutation_equivariance(permuted_pair):
    S, S2, perm = permuted_pair
    np.testing.assert_allclose(S2.wks.values[perm], S.wks.values, rtol=1e-8, atol=1e-12)


def test_orientation_channels_under_mirror(blob, blob_shape):
    T = blob[1].permutation
    ch = orientation_channels(blob_shape.wks, blob_shape.gradient, 8, blob_shape.lb.mass)
    n = 8
    mod, cos, sin = ch[:, :n], ch[:, n:2 * n - 1], ch[:, 2 * n - 1:]
    tol = 1e-6 * np.abs(ch).max()
    np.testing.assert_allclose(mod[T], mod, atol=tol)
    np.testing.assert_allclose(cos[T], cos, atol=tol)
    np.testing.assert_allclose(sin[T], -sin, atol=tol)


def test_orientation_channels_conjugated_frames(blob_shape):
    G2 = gradient_operator(blob_shape.mesh, conjugate_orientation(build_tangent_frames(blob_shape.mesh)))
    a = orientation_channels(blob_shape.wks, blob_shape.gradient, 6)
    b = orientation_channels(blob_shape.wks, G2, 6)
    np.testing.assert_allclose(b[:, :11], a[:, :11], atol=1e-12)
    np.testing.assert_allclose(b[:, 11:], -a[:, 11:], atol=1e-12)


def test_base_features_layout(blob_shape):
    plain = base_features(blob_shape.wks)
    np.testing.assert_array_equal(plain.values, blob_shape.wks.values)
    full = base_features(blob_shape.wks, blob_shape.gradient, 8, blob_shape.lb.mass)
    assert full.d == 128 + 8 + 7 + 7


def test_probe_identity_and_zero(small_shape):
    d = small_shape.wks
    np.testing.assert_array_equal(apply_probe(d, np.eye(d.d)).values, d.values)
    assert not np.any(apply_probe(d, np.zeros((d.d, 4))).values)
    with pytest.raises(DimensionError):
        apply_probe(d, np.ones((d.d + 1, 2)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_probe_dense_product(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(50, 8))
    W = rng.normal(size=(8, 4))
    out = apply_probe(DescriptorSet(X), W).values
    oracle = np.array([[sum(X[i, a] * W[a, b] for a in range(8)) for b in range(4)] for i in range(50)])
    np.testing.assert_allclose(out, oracle, rtol=1e-12, atol=1e-12)


def test_descriptor_round_trip(tmp_path, small_shape):
    p = tmp_path / "d.bin"
    save_descriptors(small_shape.wks, p)
    back = load_descriptors(p)
    np.testing.assert_array_equal(back.values, small_shape.wks.values)
    assert back.kind == "wks"
    assert back.provenance["num_energies"] == "128"


def test_bad_params():
    with pytest.raises(ValueError):
        WksParams(num_energies=1)
    with pytest.raises(ValueError):
        WksParams(num_energies=16, sigma_scale=7.0)
