from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from codesign_lab.core import InvalidArgument, box_space, function_task, substream
from codesign_lab.landscape import (
    DegenerateSpectrum,
    GradientMatrix,
    RegionStats,
    alignment_ratio,
    analyze_region,
    covariance,
    cumulative_explained_variance,
    effective_dimensionality,
    eigendecompose,
    harvest_regions,
    region_stats,
    slice_grid,
)

seeds = st.integers(0, 2**31 - 1)


def random_gradients(seed, m=None, n=None):
    rng = np.random.default_rng(seed)
    m = m or int(rng.integers(3, 12))
    n = n or int(rng.integers(1, 30))
    scales = np.exp(rng.uniform(-4, 2, m))
    return rng.standard_normal((n, m)) * scales


def test_covariance_single_unit_gradient():
    C = covariance(GradientMatrix.from_gradients([[1.0, 0.0, 0.0]]))
    assert np.array_equal(C, np.diag([1.0, 0.0, 0.0]))


def test_covariance_orthogonal_pair():
    g = np.sqrt(2) * np.eye(4)[:2]
    assert np.allclose(covariance(GradientMatrix.from_gradients(g)), np.diag([1.0, 1.0, 0.0, 0.0]), atol=1e-15)


def test_covariance_matches_triple_loop():
    G = np.random.default_rng(0).standard_normal((5, 8))
    C = covariance(G)
    ref = np.zeros((5, 5))
    for i in range(5):
        for j in range(5):
            for k in range(8):
                ref[i, j] += G[i, k] * G[j, k]
    assert np.abs(C - ref).max() < 1e-12


def test_gradient_matrix_rejects_nonfinite():
    with pytest.raises(InvalidArgument):
        GradientMatrix.from_gradients([[1.0, np.nan]])


def test_eigendecompose_identity_and_diag():
    _, lam = eigendecompose(np.eye(3))
    assert np.allclose(lam, 1.0)
    V, lam = eigendecompose(np.diag([1.0, 4.0, 0.0]))
    assert lam.tolist() == [4.0, 1.0, 0.0]
    assert np.array_equal(np.abs(V), np.eye(3)[:, [1, 0, 2]])


def test_eigendecompose_random_psd():
    A = np.random.default_rng(1).standard_normal((10, 10))
    C = A.T @ A
    V, lam = eigendecompose(C)
    assert np.linalg.norm(C - V @ np.diag(lam) @ V.T) <= 1e-10 * max(1.0, np.linalg.norm(C))
    assert np.abs(V.T @ V - np.eye(10)).max() <= 1e-10
    assert np.all(np.diff(lam) <= 0)


def test_eigendecompose_sign_convention():
    A = np.random.default_rng(2).standard_normal((6, 6))
    V, _ = eigendecompose(A @ A.T)
    idx = np.argmax(np.abs(V), axis=0)
    assert np.all(V[idx, np.arange(6)] > 0)


def test_eigendecompose_rejects_asymmetric_and_indefinite():
    with pytest.raises(InvalidArgument):
        eigendecompose(np.array([[1.0, 0.1], [0.0, 1.0]]))
    with pytest.raises(InvalidArgument):
        eigendecompose(np.diag([1.0, -1e-3]))


def test_eigendecompose_clamps_roundoff():
    _, lam = eigendecompose(np.diag([1.0, -1e-12]))
    assert lam[-1] == 0.0


def test_explained_examples():
    assert cumulative_explained_variance([1.0, 0.0, 0.0])[0].tolist() == [1.0, 1.0, 1.0]
    assert cumulative_explained_variance([2.0, 1.0, 1.0])[0].tolist() == [0.5, 0.75, 1.0]
    ev, degenerate = cumulative_explained_variance([0.0, 0.0])
    assert ev.tolist() == [1.0, 1.0] and degenerate


def test_explained_matches_prefix_sum():
    lam = np.sort(np.random.default_rng(3).random(12))[::-1]
    ev, _ = cumulative_explained_variance(lam)
    ref = [sum(lam[: k + 1]) / sum(lam) for k in range(12)]
    assert np.allclose(ev, ref, rtol=1e-14)


def test_ed_examples():
    assert effective_dimensionality([1, 1, 1, 1]) == pytest.approx(4.0)
    assert effective_dimensionality([1, 0, 0, 0]) == pytest.approx(1.0)
    assert effective_dimensionality([3, 1]) == pytest.approx(1.7548, abs=1e-4)
    with pytest.raises(DegenerateSpectrum):
        effective_dimensionality([0.0, 0.0])


def loc84_split_space():
    return box_space(84, 72)


def test_alignment_examples():
    s = loc84_split_space()
    g = np.zeros(84)
    g[75] = 3.0
    assert alignment_ratio([g], s) == (0.0, 1.0)
    assert alignment_ratio([np.ones(84)], s) == pytest.approx((0.5, 0.5))
    gm = np.zeros(84)
    gm[:72] = 1.0
    gc = np.zeros(84)
    gc[72:] = 1.0
    assert alignment_ratio([gm, gc], s) == pytest.approx((0.5, 0.5))
    with pytest.raises(DegenerateSpectrum):
        alignment_ratio([np.zeros(84)], s)


def test_degenerate_region_stats():
    s = box_space(4, 2)
    st_ = region_stats(np.zeros((5, 4)), s)
    assert st_.degenerate and st_.ed == 1.0 and (st_.align_m, st_.align_c) == (0.5, 0.5)


@given(seeds)
def test_spectrum_identities(seed):
    g = random_gradients(seed)
    m = g.shape[1]
    s = box_space(m, m - 2)
    r = region_stats(g, s)
    C, V, lam = r.C, r.V, r.eigenvalues
    scale = max(1.0, np.linalg.norm(C))
    assert np.linalg.norm(C - V @ np.diag(lam) @ V.T) <= 1e-8 * scale
    tr = np.trace(C)
    assert abs(tr - lam.sum()) <= 1e-8 * tr
    assert abs(tr - np.mean(np.sum(g * g, axis=1))) <= 1e-10 * tr
    assert 1.0 - 1e-12 <= r.ed <= r.rank + 1e-9
    assert np.all(np.diff(r.explained) >= -1e-15) and r.explained[-1] == 1.0
    assert r.align_m + r.align_c == 1.0


@given(seeds)
def test_spectrum_rotation_invariant(seed):
    g = random_gradients(seed, m=6, n=20)
    Q, _ = np.linalg.qr(np.random.default_rng(seed + 1).standard_normal((6, 6)))
    _, lam = eigendecompose(covariance(GradientMatrix.from_gradients(g)))
    _, lam_r = eigendecompose(covariance(GradientMatrix.from_gradients(g @ Q.T)))
    assert np.allclose(lam, lam_r, rtol=1e-8, atol=1e-12 * lam[0])


@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=20).filter(lambda v: sum(v) > 1e-6))
def test_ed_bounds(lam):
    lam = np.array(sorted(lam, reverse=True))
    ed = effective_dimensionality(lam)
    assert 1.0 - 1e-12 <= ed <= np.count_nonzero(lam) + 1e-9


def test_rank_one_landscape_recovered():
    m = 10
    u = np.random.default_rng(4).standard_normal(m)
    u /= np.linalg.norm(u)
    s = box_space(m, 7, -1.0, 1.0)
    t = function_task("rank1", s, lambda x: float((x @ u) ** 2), lambda x: 2 * (x @ u) * u)
    r = analyze_region(t, np.full(m, 0.1), 0.02, 100, substream(0))
    assert r.eigenvalues[0] / r.eigenvalues.sum() > 0.999
    assert abs(r.V[:, 0] @ u) > 0.99


def test_isotropic_quadratic_has_full_ed():
    m = 10
    s = box_space(m, 5, -1.0, 1.0)
    t = function_task("sphere", s, lambda x: float(x @ x), lambda x: 2 * x)
    r = analyze_region(t, np.zeros(m), 0.05, 4000, substream(1))
    assert abs(r.ed - m) <= 0.1 * m
    assert r.C.shape == (m, m) and r.N == 4000


def test_analyze_region_shape_loc84(loc84_short):
    r = analyze_region(loc84_short, loc84_short.space.baseline, 0.02, 100, substream(2))
    assert r.C.shape == (84, 84) and r.N + r.diverged == 100
    assert 1.0 <= r.ed <= r.rank


def test_region_stats_json_round_trip():
    s = box_space(5, 3)
    r = region_stats(random_gradients(5, m=5, n=10), s, losses=[1.0, -2.0])
    back = RegionStats.from_dict(r.to_dict(full_eigvecs=True))
    assert back.best_loss == -2.0 and np.allclose(back.C, r.C)
    assert "eigenvectors" not in r.to_dict()


def test_slice_grid_paraboloid():
    s = box_space(3, 2, -1.0, 1.0)
    t = function_task("q", s, lambda x: float(x @ x))
    a, b, L, div = slice_grid(t, np.zeros(3), [1, 0, 0], [0, 1, 0], 0.2, 50)
    assert L.shape == (50, 50) and not div.any()
    # box step t moves raw x by 2t (width 2)
    ref = (2 * a[:, None]) ** 2 + (2 * b[None, :]) ** 2
    assert np.abs(L - ref).max() <= 1e-10


def test_slice_grid_collinear_directions():
    s = box_space(3, 2)
    t = function_task("lin", s, lambda x: float(np.sin(3 * x[0]) + x[1]))
    a, _, L, _ = slice_grid(t, s.baseline, [1, 0, 0], [1, 0, 0], 0.1, 5)
    # cell (i, j) depends only on alpha_i + beta_j
    assert np.allclose(L, L.T) and L[0, 4] == pytest.approx(L[2, 2])


def test_slice_grid_rejects_bad_input():
    s = box_space(3, 2)
    t = function_task("q", s, lambda x: float(x @ x))
    with pytest.raises(InvalidArgument):
        slice_grid(t, s.baseline, [2, 0, 0], [0, 1, 0], 0.1)
    with pytest.raises(InvalidArgument):
        slice_grid(t, s.baseline, [1, 0, 0], [0, 1, 0], 0.1, resolution=1)


def rec(xs):
    return SimpleNamespace(iteration_best_x=[np.array([v]) for v in xs])


def test_harvest_examples():
    one = rec(range(10))
    assert [float(x[0]) for x in harvest_regions([one], 10)] == list(range(10))
    assert len(harvest_regions([one], 50)) == 10
    a, b = rec(range(10)), rec(range(100, 110))
    got = [float(x[0]) for x in harvest_regions([a, b], 6, stride=2)]
    assert got == [0, 100, 2, 102, 4, 104]
    with pytest.raises(InvalidArgument):
        harvest_regions([], 3)


def test_ed_with_underflowing_eigenvalue():
    assert effective_dimensionality([2.0, 5e-324]) == 1.0


def test_explained_never_overshoots_one():
    lam = np.array([80810.81213705834, 55077.35100335186, 0.5591559142258661, 0.1383952476761443,
                    0.027738093358870453, 3.3214529163976603e-10, 5.549368547185474e-11, 1.4770004919450132e-11])
    out, _ = cumulative_explained_variance(lam)
    assert np.all(np.diff(out) >= 0) and out[-1] == 1.0
