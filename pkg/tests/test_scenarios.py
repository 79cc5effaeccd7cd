import numpy as np
import pytest

from duofm.cache import cache_read, cache_write
from duofm.convert_eval import orientation_sign, p2p_from_C, p2p_from_Q
from duofm.refine import TrainConfig, total_loss
from duofm.scenarios import adversarial_probe, channel_groups, feature_stack, mirror_trap_pair, swap_twin


@pytest.fixture(scope="module")
def trap():
    return mirror_trap_pair(2, resolution=6, k_c=20, k_q=10)


def _maps(trap, W):
    _, diag = total_loss(trap.pair, W, TrainConfig())
    S_M, S_N = trap.shape_M, trap.shape_N
    pc = p2p_from_C(diag["C"], S_M.lb.evecs, S_N.lb.evecs)
    pq = p2p_from_Q(diag["Q"], S_M.conn.evecs, S_N.conn.evecs, S_M.divergence, S_N.divergence)
    return diag, pc, pq


def test_groups_cover_features(trap):
    g = trap.groups
    assert sum(len(v) for v in g.values()) == trap.X_M.shape[1]
    assert np.array_equal(np.concatenate(list(g.values())), np.arange(trap.X_M.shape[1]))


def test_twin_channels(trap):
    g = trap.groups
    np.testing.assert_allclose(trap.X_M[:, g["twin"]], trap.X_M[:, g["sin"]], atol=1e-12)
    np.testing.assert_allclose(trap.X_N[:, g["twin"]], -trap.X_N[:, g["sin"]], atol=1e-12)


def test_ground_truths(trap):
    X_M, X_N = trap.X_M, trap.X_N
    g = trap.groups
    keep = np.r_[g["wks"], g["mod"], g["cos"]]
    tol = 1e-6 * np.abs(X_M).max()
    np.testing.assert_allclose(X_N[trap.truth][:, keep], X_M[:, keep], atol=tol)
    np.testing.assert_allclose(X_N[trap.mirror_truth][:, keep], X_M[:, keep], atol=tol)
    # direct map carries the sines, the mirror carries the twins
    np.testing.assert_allclose(X_N[trap.truth][:, g["sin"]], X_M[:, g["sin"]], atol=tol)
    np.testing.assert_allclose(X_N[trap.mirror_truth][:, g["twin"]], X_M[:, g["twin"]], atol=tol)


def test_adversarial_probe_is_exact_mirror(trap):
    W = adversarial_probe(trap.groups, trap.X_M.shape[1], seed=0, bias=1.0)
    diag, pc, pq = _maps(trap, W)
    # exact optimum of the orientation-blind term; the complex map cannot follow a mirror
    assert diag["L_ortho"] <= 1e-10
    assert diag["L_q_ortho"] > 1.0
    assert pc.accuracy(trap.mirror_truth) >= 0.99
    assert orientation_sign(pc, trap.shape_M.mesh, trap.shape_N.mesh) == -1


def test_swapped_probe_is_exact_direct(trap):
    W = swap_twin(adversarial_probe(trap.groups, trap.X_M.shape[1], seed=0, bias=1.0), trap.groups)
    diag, pc, pq = _maps(trap, W)
    assert diag["L_ortho"] <= 1e-10 and diag["L_q_ortho"] <= 1e-10
    assert pc.accuracy(trap.truth) >= 0.99
    assert orientation_sign(pc, trap.shape_M.mesh, trap.shape_N.mesh) == 1
    assert orientation_sign(pq, trap.shape_M.mesh, trap.shape_N.mesh) == 1


def test_swap_is_a_symmetry_of_the_real_block(trap):
    W = adversarial_probe(trap.groups, trap.X_M.shape[1], seed=1, bias=0.3)
    cfg = TrainConfig(w_q_ortho=0.0)
    a, da = total_loss(trap.pair, W, cfg)
    b, db = total_loss(trap.pair, swap_twin(W, trap.groups), cfg)
    assert abs(a - b) <= 1e-8 * max(1.0, a)
    assert abs(da["L_iso"] - db["L_iso"]) <= 1e-8 * max(1.0, da["L_iso"])
    # the complex block tells the two apart
    assert da["L_q_ortho"] != db["L_q_ortho"]
    np.testing.assert_array_equal(swap_twin(swap_twin(W, trap.groups), trap.groups), W)


def test_features_from_cached_shape(tmp_path, trap):
    cache_write(tmp_path / "n.duo", trap.shape_N)
    back, _ = cache_read(tmp_path / "n.duo")
    assert back.frames is None
    np.testing.assert_array_equal(feature_stack(back, twin=-1), trap.X_N)


def test_channel_groups_without_twin():
    g = channel_groups(16, 4, twin=False)
    assert len(g["twin"]) == 0 and g["sin"][-1] == 16 + 4 + 3 + 3 - 1
