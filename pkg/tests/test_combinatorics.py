import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from expsig.combinatorics import (
    canonical_pairing,
    compatible_pairings,
    double_factorial,
    enumerate_pairings,
    is_even_word,
    is_valid_pairing,
    letter_pattern,
    pairing_array,
    pairing_rank,
    wick_moment,
)
from expsig.errors import ResourceError


def brute_force_pairings(points):
    """Reference enumeration by recursion on the smallest point."""
    if not points:
        return [()]
    first, rest = points[0], points[1:]
    out = []
    for i, partner in enumerate(rest):
        for tail in brute_force_pairings(rest[:i] + rest[i + 1:]):
            out.append(((first, partner),) + tail)
    return out


def test_golden_lists():
    assert enumerate_pairings(1) == [((1, 2),)]
    assert enumerate_pairings(2) == [((1, 2), (3, 4)), ((1, 3), (2, 4)), ((1, 4), (2, 3))]
    assert len(enumerate_pairings(4)) == 105


@pytest.mark.parametrize("n", range(1, 7))
def test_counts_and_order(n):
    ps = enumerate_pairings(n)
    assert len(ps) == double_factorial(2 * n - 1)
    if n <= 5:
        assert ps == brute_force_pairings(tuple(range(1, 2 * n + 1)))
        assert all(is_valid_pairing(p, n) for p in ps)
        assert [pairing_rank(p) for p in ps] == list(range(len(ps)))


def test_guard_and_speed():
    with pytest.raises(ResourceError):
        enumerate_pairings(9)
    with pytest.raises(ValueError):
        enumerate_pairings(0)
    pairing_array.cache_clear()
    t0 = time.perf_counter()
    arr = pairing_array(8)
    assert time.perf_counter() - t0 < 1.0
    assert arr.shape == (2027025, 8, 2)
    assert np.all(arr[..., 0] < arr[..., 1])


def test_rank_rejects_non_pairing():
    with pytest.raises(ValueError):
        pairing_rank(((1, 2), (2, 3)))


def test_canonical():
    assert canonical_pairing(3) == ((1, 2), (3, 4), (5, 6))
    assert pairing_rank(canonical_pairing(4)) == 0


def test_even_words():
    assert is_even_word((1, 1, 2, 2))
    assert not is_even_word((1, 2, 2, 2))
    assert is_even_word((1, 2, 1, 2))
    assert is_even_word(())


def test_compatible_examples():
    assert compatible_pairings((1, 1, 2, 2)) == [((1, 2), (3, 4))]
    assert compatible_pairings((1, 2, 1, 2)) == [((1, 3), (2, 4))]
    assert compatible_pairings((1, 1, 1, 1)) == enumerate_pairings(2)
    assert compatible_pairings((1, 2)) == []
    assert compatible_pairings(()) == [()]
    with pytest.raises(ValueError):
        compatible_pairings((1, 1, 1))


@given(st.lists(st.integers(1, 3), min_size=0, max_size=5).map(lambda w: tuple(w + w[::-1] if len(w) % 2 == 0 else w + w)))
def test_compatible_implies_even(word):
    ps = compatible_pairings(word)
    if ps:
        assert is_even_word(word)
    for p in ps:
        assert all(word[a - 1] == word[b - 1] for a, b in p)


@given(st.lists(st.integers(1, 4), max_size=8))
def test_letter_pattern_invariant(word):
    pat = letter_pattern(word)
    assert letter_pattern(pat) == pat
    if len(word) % 2 == 0:
        assert len(compatible_pairings(pat)) == len(compatible_pairings(word))


def test_wick_examples():
    s2 = 2.5
    assert wick_moment([[s2, s2], [s2, s2]]) == s2
    assert wick_moment(np.ones((4, 4))) == 3.0
    v1, v2 = 0.7, 1.9
    cov = np.diag([v1, v1, v2, v2])
    cov[0, 1] = cov[1, 0] = v1
    cov[2, 3] = cov[3, 2] = v2
    assert wick_moment(cov) == pytest.approx(v1 * v2, rel=1e-15)
    assert wick_moment(np.eye(3)) == 0.0
    assert wick_moment(np.zeros((0, 0))) == 1.0
    with pytest.raises(ValueError):
        wick_moment([[1.0, 0.5], [0.0, 1.0]])


@pytest.mark.parametrize("n", [1, 2, 3])
def test_wick_matches_sampled_moment(n):
    rng = np.random.default_rng(11 + n)
    A = rng.normal(size=(2 * n, 2 * n))
    cov = A @ A.T / (2 * n)
    x = rng.multivariate_normal(np.zeros(2 * n), cov, size=1_000_000)
    prods = np.prod(x, axis=1)
    est, se = prods.mean(), prods.std(ddof=1) / np.sqrt(prods.size)
    assert abs(est - wick_moment(cov)) <= 4 * se
