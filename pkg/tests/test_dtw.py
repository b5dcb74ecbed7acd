import itertools
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_trial
from dyadscan.dtw import (
    WarpPath,
    align,
    channelwise_similarity,
    dtw,
    dtw_distances,
    path_costs,
    path_csv,
    similarity_from_distance,
    similarity_samples,
)
from dyadscan.errors import EmptySeries, InvalidPath, WindowTooNarrow

series = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=12)


def brute_force(a, b):
    """Minimum cost over every monotone path, enumerated recursively."""
    m, n = len(a), len(b)

    @lru_cache(maxsize=None)
    def paths(i, j):
        if (i, j) == (0, 0):
            return [((0, 0),)]
        out = []
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i - di >= 0 and j - dj >= 0:
                out += [p + ((i, j),) for p in paths(i - di, j - dj)]
        return out

    best = np.inf
    for p in paths(m - 1, n - 1):
        total = 0.0
        for i, j in p:
            total += abs(a[i] - b[j])
        best = min(best, total)
    return best


def diagonal_then_edge_cost(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    k = min(a.size, b.size)
    cost = np.abs(a[:k] - b[:k]).sum()
    if a.size > b.size:
        cost += np.abs(a[k:] - b[-1]).sum()
    else:
        cost += np.abs(b[k:] - a[-1]).sum()
    return cost


class TestExamples:
    def test_identity(self):
        x = np.array([0.3, -1.0, 2.0, 2.0, 0.5])
        r = dtw(x, x)
        assert r.distance == 0.0 and r.similarity == 1.0
        assert r.path.steps == tuple((i, i) for i in range(5))

    def test_small_known_distance(self):
        assert dtw([1, 2, 3], [1, 3, 3]).distance == 1.0
        assert brute_force([1, 2, 3], [1, 3, 3]) == 1.0

    def test_single_points(self):
        r = dtw([0], [5])
        assert r.distance == 5.0
        assert r.similarity == pytest.approx(1 / 6, abs=1e-15)

    def test_empty(self):
        with pytest.raises(EmptySeries):
            dtw([], [1.0])

    def test_tie_break_prefers_diagonal_then_vertical(self):
        assert dtw([0, 0, 0], [0, 0]).path.steps == ((0, 0), (1, 0), (2, 1))
        assert dtw([0, 0], [0, 0, 0]).path.steps == ((0, 0), (0, 1), (1, 2))


class TestOracle:
    def test_exhaustive_small_alphabet(self):
        for m, n in [(1, 1), (1, 3), (2, 2), (3, 2), (3, 3), (4, 3)]:
            for a in itertools.product(range(3), repeat=m):
                for b in itertools.product(range(3), repeat=n):
                    assert dtw(a, b).distance == brute_force(a, b)

    def test_random_floats(self, rng):
        for _ in range(150):
            a = rng.normal(size=rng.integers(1, 7))
            b = rng.normal(size=rng.integers(1, 7))
            assert dtw(a, b).distance == brute_force(a, b)

    def test_batched_matches_single(self, rng):
        a = rng.normal(size=(40, 9))
        b = rng.normal(size=(40, 7))
        batch = dtw_distances(a, b)
        np.testing.assert_array_equal(batch, [dtw(x, y).distance for x, y in zip(a, b)])


class TestProperties:
    @settings(max_examples=80, deadline=None)
    @given(series, series)
    def test_symmetry(self, a, b):
        assert dtw(a, b).distance == dtw(b, a).distance

    @settings(max_examples=50, deadline=None)
    @given(series)
    def test_identity_zero(self, a):
        assert dtw(a, a).distance == 0.0

    @settings(max_examples=80, deadline=None)
    @given(series, series)
    def test_bounds_and_path(self, a, b):
        r = dtw(a, b)
        assert 0.0 <= r.distance <= diagonal_then_edge_cost(a, b) + 1e-9
        r.path.validate(len(a), len(b))
        assert path_costs(a, b, r.path).sum() == pytest.approx(r.distance, rel=1e-12, abs=1e-12)
        assert r.similarity == 1.0 / (1.0 + r.distance)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_shift_robustness(self, k):
        t = np.arange(50)
        pulse = np.exp(-0.5 * ((t - 20) / 2.0) ** 2)
        shifted = np.roll(pulse, k)
        euclid = np.linalg.norm(pulse - shifted)
        assert dtw(pulse, shifted).distance < euclid

    def test_similarity_monotone(self):
        d = np.linspace(0, 50, 1001)
        s = similarity_from_distance(d)
        assert np.all(np.diff(s) < 0)
        assert s[0] == 1.0 and np.all(s[1:] < 1.0)


class TestWindow:
    def test_wide_window_is_unconstrained(self, rng):
        a, b = rng.normal(size=12), rng.normal(size=10)
        assert dtw(a, b, window=12).distance == dtw(a, b).distance

    def test_narrow_window_never_beats_full(self, rng):
        for _ in range(20):
            a, b = rng.normal(size=15), rng.normal(size=15)
            assert dtw(a, b, window=2).distance >= dtw(a, b).distance

    def test_path_stays_in_band(self, rng):
        a, b = rng.normal(size=20), rng.normal(size=18)
        r = dtw(a, b, window=3)
        assert all(abs(i - j) <= 3 for i, j in r.path)

    def test_too_narrow(self):
        with pytest.raises(WindowTooNarrow):
            dtw(np.ones(10), np.ones(5), window=4)

    def test_normalize_path(self, rng):
        a, b = rng.normal(size=(1, 8)), rng.normal(size=(1, 6))
        r = dtw(a[0], b[0])
        np.testing.assert_allclose(dtw_distances(a, b, normalize_path=True),
                                   [r.distance / len(r.path)])


class TestAlign:
    def test_identical(self):
        x = np.array([1.0, 4.0, 2.0])
        ea, eb = align(x, x, dtw(x, x).path)
        np.testing.assert_array_equal(ea, x)
        np.testing.assert_array_equal(eb, x)

    def test_expansion(self):
        r = dtw([1, 2], [1, 1, 2])
        assert r.path.steps == ((0, 0), (0, 1), (1, 2))
        ea, eb = align([1, 2], [1, 1, 2], r.path)
        np.testing.assert_array_equal(ea, [1, 1, 2])
        np.testing.assert_array_equal(eb, [1, 1, 2])

    def test_pointwise_sum_is_distance(self, rng):
        a, b = rng.normal(size=9), rng.normal(size=13)
        r = dtw(a, b)
        ea, eb = align(a, b, r.path)
        assert ea.size == eb.size == len(r.path)
        assert np.abs(ea - eb).sum() == pytest.approx(r.distance, rel=1e-12)

    @pytest.mark.parametrize("steps", [
        ((0, 0), (1, 1), (0, 2), (1, 2)),  # goes backwards
        ((0, 0), (1, 2)),                   # skips
        ((0, 1), (1, 2)),                   # wrong start
        ((0, 0), (1, 1)),                   # wrong end
    ])
    def test_invalid(self, steps):
        with pytest.raises(InvalidPath):
            align([1, 2], [1, 2, 3], WarpPath(steps))


class TestChannelwise:
    def test_identical_participants(self, rng):
        x = rng.normal(size=(18, 50))
        s = channelwise_similarity(make_trial(x, x))
        np.testing.assert_array_equal(s.scores, np.ones(18))

    def test_two_point_channel(self):
        s = channelwise_similarity(make_trial(np.array([0.0, 0.0]), np.array([1.0, 1.0])))
        np.testing.assert_array_equal(s.scores, [1 / 3])

    def test_permutation_equivariance(self, rng):
        a, b = rng.normal(size=(18, 50)), rng.normal(size=(18, 50))
        perm = rng.permutation(18)
        base = channelwise_similarity(make_trial(a, b)).scores
        permuted = channelwise_similarity(make_trial(a[perm], b[perm])).scores
        np.testing.assert_array_equal(permuted, base[perm])

    def test_labels_copied(self, rng):
        t = make_trial(rng.normal(size=(2, 5)), rng.normal(size=(2, 5)), dyad_id="FF-009",
                       sex="FF", task="comp")
        s = channelwise_similarity(t)
        assert (s.dyad_id, s.sex.value, s.task.value) == ("FF-009", "FF", "comp")

    def test_batch_matches_individual(self, rng):
        trials = [make_trial(rng.normal(size=(3, n)), rng.normal(size=(3, n)), index=k)
                  for k, n in enumerate((50, 51, 50, 52))]
        batch = similarity_samples(trials)
        for t, s in zip(trials, batch):
            assert s == channelwise_similarity(t)


def test_path_csv():
    a, b = [0.0, 1.0], [0.0, 0.5, 1.0]
    text = path_csv(a, b, dtw(a, b).path)
    lines = text.strip().split("\n")
    assert lines[0] == "i,j,cost"
    rows = [tuple(map(float, l.split(","))) for l in lines[1:]]
    assert rows[0][:2] == (0, 0) and rows[-1][:2] == (1, 2)
    assert sum(r[2] for r in rows) == dtw(a, b).distance
