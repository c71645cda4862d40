import numpy as np
import pytest

from cryobo.errors import ValidationFailure
from cryobo.kcenter import CoverageState, kcenter_select


def brute_force_greedy(known, pool, batch):
    # reference implementation: recompute all distances at every step
    known = [np.asarray(k, dtype=float) for k in known]
    picks = []
    for _ in range(batch):
        if known or picks:
            centers = known + [pool[i] for i in picks]
            dists = [min(np.linalg.norm(pool[i] - c) for c in centers)
                     for i in range(len(pool))]
        else:
            centroid = np.mean(pool, axis=0)
            dists = [np.linalg.norm(pool[i] - centroid) for i in range(len(pool))]
        for i in picks:
            dists[i] = -np.inf
        best = max(dists)
        idx = min(i for i, d in enumerate(dists) if d == best)
        picks.append(idx)
    return picks


def test_farthest_point_example():
    picks = kcenter_select(np.array([[0.0]]), np.array([[0.2], [0.9], [1.0]]), 1)
    assert picks == [2]  # 1.0 is farthest from 0.0


def test_continuation_example():
    picks = kcenter_select(np.array([[0.0], [1.0]]), np.array([[0.2], [0.9]]), 1)
    assert picks == [0]  # min-dists are 0.2 vs 0.1


def test_empty_known_bootstraps_from_centroid():
    pool = np.array([[0.0], [0.4], [0.5], [2.0]])
    picks = kcenter_select(np.empty((0, 1)), pool, 1)
    centroid = pool.mean(axis=0)
    dists = np.linalg.norm(pool - centroid, axis=1)
    assert picks == [int(np.argmax(dists))]


def test_matches_bruteforce_greedy():
    rng = np.random.default_rng(5)
    for trial in range(15):
        d = rng.integers(1, 4)
        pool = rng.random((rng.integers(5, 60), d))
        known = rng.random((rng.integers(0, 4), d))
        batch = int(min(5, len(pool)))
        got = kcenter_select(known, pool, batch)
        assert got == brute_force_greedy(list(known), pool, batch)


def test_greedy_certificate():
    # every pick maximizes min-distance at its selection moment
    rng = np.random.default_rng(9)
    pool = rng.random((80, 3))
    known = rng.random((5, 3))
    picks = kcenter_select(known, pool, 10)
    for step, pick in enumerate(picks):
        centers = np.vstack([known, pool[picks[:step]]]) if step else known
        dists = np.sqrt(((pool[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)).min(axis=1)
        dists[picks[:step]] = -np.inf
        assert dists[pick] >= dists.max() - 1e-9


def test_incremental_cache_equals_recompute():
    rng = np.random.default_rng(13)
    pool = rng.random((50, 2))
    known = rng.random((3, 2))
    state = CoverageState(known, pool)
    state.select(7)
    centers = np.vstack([known, pool[state.selected]])
    expect = np.sqrt(((pool[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)).min(axis=1)
    assert np.allclose(state.min_dist, np.minimum(state.min_dist, expect), atol=1e-12)
    # cache tracks known + selected exactly
    assert np.allclose(np.minimum(state.min_dist, expect), expect, atol=1e-12)


def test_coverage_radius_non_increasing():
    rng = np.random.default_rng(17)
    pool = rng.random((60, 2))
    known = rng.random((2, 2))
    radii = []
    state = CoverageState(known, pool)
    for _ in range(10):
        state.select_next()
        radii.append(state.coverage_radius())
    assert all(a >= b - 1e-12 for a, b in zip(radii, radii[1:]))


def test_validation():
    with pytest.raises(ValidationFailure):
        kcenter_select(np.array([[0.0]]), np.empty((0, 1)), 1)
    with pytest.raises(ValidationFailure):
        kcenter_select(np.array([[0.0]]), np.array([[1.0]]), 2)
    with pytest.raises(ValidationFailure):
        kcenter_select(np.array([[1.0]]), np.array([[1.0], [2.0]]), 1)  # overlap


def test_deterministic_tie_break_by_id():
    pool = np.array([[1.0], [-1.0]])  # symmetric around known point
    picks = kcenter_select(np.array([[0.0]]), pool, 2, pool_ids=["b", "a"])
    assert picks == [1, 0]  # "a" wins the tie
