import random

import pytest

from lmbsim.intervals import IntervalSet


def test_add_merges_neighbours():
    s = IntervalSet([(0, 10), (20, 30)])
    s.add(10, 20)
    assert list(s) == [(0, 30)]


def test_barrier_blocks_merge():
    s = IntervalSet([(0, 10)], barriers=[10])
    s.add(10, 20)
    assert list(s) == [(0, 10), (10, 20)]


def test_remove_splits_and_rejects_uncovered():
    s = IntervalSet([(0, 100)])
    s.remove(40, 60)
    assert list(s) == [(0, 40), (60, 100)]
    with pytest.raises(ValueError):
        s.remove(30, 70)


def test_overlapping_add_rejected():
    s = IntervalSet([(0, 10)])
    with pytest.raises(ValueError):
        s.add(5, 15)
    with pytest.raises(ValueError):
        s.add(3, 3)


def test_first_fit_alignment():
    s = IntervalSet([(1, 5), (7, 100)])
    assert s.first_fit(4) == 1
    assert s.first_fit(5) == 7
    assert s.first_fit(4, align=8) == 8
    assert s.first_fit(1000) is None


def test_matches_bitmap_oracle():
    rnd = random.Random(5)
    n = 64
    free = [True] * n
    s = IntervalSet([(0, n)])
    for _ in range(3000):
        a = rnd.randrange(n)
        b = rnd.randrange(a + 1, n + 1)
        if all(free[a:b]):
            s.remove(a, b)
            free[a:b] = [False] * (b - a)
        elif not any(free[a:b]):
            s.add(a, b)
            free[a:b] = [True] * (b - a)
        size = rnd.randrange(1, 9)
        expect = next((i for i in range(n - size + 1) if all(free[i:i + size])), None)
        assert s.first_fit(size) == expect
        assert s.total() == sum(free)
        # without barriers, free runs are always one coalesced interval
        assert s.contains(a, b) == all(free[a:b])
