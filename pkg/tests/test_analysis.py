import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecmem.analysis import (
    batch_kmeans,
    fraction_inside,
    kde_grid,
    phase2_box,
    run_stream_study,
    scott_bandwidth,
    stream_study,
)
from ecmem.envs import StreamSpec, synthetic_stream

points_2d = st.lists(
    st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=40
).map(np.array)


# -- k-means ---------------------------------------------------------------


def test_kmeans_k_equals_n():
    pts = np.random.default_rng(0).random((12, 2))
    res = batch_kmeans(pts, 12)
    assert res.inertia[-1] == 0.0
    assert sorted(map(tuple, res.centroids)) == sorted(map(tuple, pts))


def test_kmeans_single_cluster_is_mean():
    pts = np.random.default_rng(1).random((30, 2))
    np.testing.assert_allclose(batch_kmeans(pts, 1).centroids[0], pts.mean(axis=0), rtol=1e-12)


def test_kmeans_too_many_clusters():
    with pytest.raises(ValueError):
        batch_kmeans(np.zeros((3, 2)), 4)


@settings(max_examples=50, deadline=None)
@given(points_2d, st.integers(1, 8), st.integers(0, 100))
def test_kmeans_inertia_monotone(pts, k, seed):
    k = min(k, len(pts))
    res = batch_kmeans(pts, k, max_iters=20, seed=seed)
    assert res.iterations <= 20
    assert all(b <= a + 1e-12 for a, b in zip(res.inertia, res.inertia[1:]))


# -- stream study ----------------------------------------------------------

SMALL = StreamSpec(grid_points=8, n_skew=100, seed=2)


def test_snapshots_respect_capacity():
    snaps = stream_study(SMALL, memory_size=10)
    assert len(snaps) == 16
    assert {s.fraction for s in snaps} == {0.25, 0.5, 0.75, 1.0}
    assert all(len(s.centroids) <= 10 for s in snaps)


def test_lru_final_is_most_recent_distinct_points():
    stream = synthetic_stream(SMALL)
    snaps = stream_study(SMALL, memory_size=10)
    lru = next(s for s in snaps if s.method == "lru" and s.fraction == 1.0)
    recent = []
    for p in stream[::-1]:
        if tuple(p) not in recent:
            recent.append(tuple(p))
        if len(recent) == 10:
            break
    assert set(map(tuple, lru.centroids)) == set(recent)


def test_cluster_counts_sum_to_stream_length_for_km():
    snaps = stream_study(SMALL, memory_size=10)
    km = next(s for s in snaps if s.method == "km" and s.fraction == 1.0)
    assert km.counts.sum() == pytest.approx(len(synthetic_stream(SMALL)))


def test_stream_study_deterministic():
    a, b = stream_study(SMALL, 10), stream_study(SMALL, 10)
    for x, y in zip(a, b):
        assert x.method == y.method and np.array_equal(x.centroids, y.centroids)


def test_stream_study_rejects_tiny_memory():
    with pytest.raises(ValueError):
        stream_study(SMALL, memory_size=1)


def test_phase2_box_holds_ninety_percent():
    spec = StreamSpec(n_skew=200_000, seed=5)
    tail = synthetic_stream(spec)[-spec.n_skew:]
    assert fraction_inside(tail, phase2_box(spec)) == pytest.approx(0.9, abs=0.005)


# -- kde -------------------------------------------------------------------


def test_kde_single_point_argmax():
    g = kde_grid([[0.33, 0.71]], resolution=20, bandwidth=0.05)
    i, j = np.unravel_index(np.argmax(g.values), g.values.shape)
    assert (i, j) == (6, 14)


def test_kde_mass_inside_bounds():
    pts = np.random.default_rng(0).normal(0.5, 0.05, size=(50, 2))
    g = kde_grid(pts, resolution=40, bounds=(-1.0, 2.0, -1.0, 2.0))
    assert g.mass == pytest.approx(1.0, abs=1e-6)
    assert np.all(g.values >= 0)


def test_kde_weight_scale_invariance():
    rng = np.random.default_rng(1)
    pts, w = rng.random((20, 2)), rng.random(20) + 0.1
    a = kde_grid(pts, w, resolution=16)
    b = kde_grid(pts, 2 * w, resolution=16)
    np.testing.assert_allclose(a.values, b.values, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(points_2d, st.randoms(use_true_random=False))
def test_kde_permutation_invariance(pts, rnd):
    order = list(range(len(pts)))
    rnd.shuffle(order)
    a = kde_grid(pts, resolution=12, bandwidth=0.1)
    b = kde_grid(pts[order], resolution=12, bandwidth=0.1)
    np.testing.assert_allclose(a.values, b.values, rtol=1e-9, atol=1e-12)


def test_kde_errors():
    with pytest.raises(ValueError):
        kde_grid(np.empty((0, 2)))
    with pytest.raises(ValueError):
        kde_grid([[0.5, 0.5]], bandwidth=0.0)
    with pytest.raises(ValueError):
        kde_grid([[0.5, 0.5]], weights=[-1.0])


def test_scott_bandwidth_shrinks_with_n():
    rng = np.random.default_rng(2)
    assert scott_bandwidth(rng.random((1000, 2))) < scott_bandwidth(rng.random((10, 2)))


def test_run_stream_study_writes_files(tmp_path):
    run_stream_study(str(tmp_path), memory_size=20, resolution=8)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["density_data.csv", "density_dkm.csv", "density_km.csv", "density_kmeans.csv", "density_lru.csv", "snapshots.csv"]
    header = (tmp_path / "snapshots.csv").read_text().splitlines()[0]
    assert header == "method,fraction,x,y,n"
    assert len((tmp_path / "density_dkm.csv").read_text().splitlines()) == 8
