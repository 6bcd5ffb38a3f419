"""Pairings of {1..2n}, even-word classification and Wick/Isserlis moments."""

from __future__ import annotations

import math
from collections import Counter
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ResourceError

#: Largest 2n accepted by :func:`enumerate_pairings` (15!! = 2,027,025 pairings).
MAX_PAIRED_POINTS = 16

Pair = tuple[int, int]
Pairing = tuple[Pair, ...]


def double_factorial(k: int) -> int:
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


@lru_cache(maxsize=None)
def pairing_array(n: int) -> np.ndarray:
    """All perfect matchings of {1, ..., 2n} as a read-only int8 array of shape ((2n-1)!!, n, 2).

    Built level by level: point 1 is joined to each partner in turn and the
    matchings of the remaining 2n - 2 points are relabelled onto them.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if 2 * n > MAX_PAIRED_POINTS:
        raise ResourceError(
            f"2n = {2 * n} exceeds the enumeration guard {MAX_PAIRED_POINTS}"
        )
    cur = np.array([[[0, 1]]], dtype=np.int8)
    for k in range(2, n + 1):
        m = 2 * k
        blocks = []
        for j in range(1, m):
            remap = np.array([x for x in range(1, m) if x != j], dtype=np.int8)
            head = np.broadcast_to(np.array([[0, j]], dtype=np.int8), (cur.shape[0], 1, 2))
            blocks.append(np.concatenate([head, remap[cur]], axis=1))
        cur = np.concatenate(blocks)
    out = cur + np.int8(1)
    out.setflags(write=False)
    return out


def _as_tuples(arr: np.ndarray) -> list[Pairing]:
    return [tuple(map(tuple, p)) for p in arr.tolist()]


def enumerate_pairings(n: int) -> list[Pairing]:
    """All perfect matchings of {1, ..., 2n}.

    The smallest unmatched element is paired first, trying partners in
    increasing order, so the output order is fixed.  Each pairing is a tuple
    of pairs (a, b) with a < b, sorted by a.  Use :func:`pairing_array` when
    n is large and tuples are not needed.
    """
    return _as_tuples(pairing_array(n))


def pairing_rank(pairing: Pairing) -> int:
    """Position of ``pairing`` in :func:`enumerate_pairings` order."""
    pairing = tuple(sorted(tuple(sorted(p)) for p in pairing))
    n = len(pairing)
    if not is_valid_pairing(pairing, n):
        raise ValueError(f"not a pairing of 1..{2 * n}: {pairing}")
    remaining = list(range(1, 2 * n + 1))
    rank = 0
    for step, (a, b) in enumerate(pairing):
        remaining.remove(a)
        rank += remaining.index(b) * double_factorial(2 * (n - step) - 3)
        remaining.remove(b)
    return rank


def canonical_pairing(n: int) -> Pairing:
    return tuple((2 * i + 1, 2 * i + 2) for i in range(n))


def is_valid_pairing(pairing: Sequence[Pair], n: int) -> bool:
    points = [p for pair in pairing for p in pair]
    return (
        len(pairing) == n
        and sorted(points) == list(range(1, 2 * n + 1))
        and all(a < b for a, b in pairing)
    )


def is_even_word(word: Sequence[int]) -> bool:
    return all(c % 2 == 0 for c in Counter(word).values())


def compatible_pairings(word: Sequence[int]) -> list[Pairing]:
    """Pairings of the word's positions that only join equal letters."""
    word = tuple(word)
    if len(word) % 2:
        raise ValueError(f"word of odd length {len(word)} has no pairings")
    if not word:
        return [()]
    if not is_even_word(word):
        return []
    letters = np.asarray(word)
    arr = pairing_array(len(word) // 2)
    keep = np.all(letters[arr[..., 0] - 1] == letters[arr[..., 1] - 1], axis=1)
    return _as_tuples(arr[keep])


def letter_pattern(word: Sequence[int]) -> tuple[int, ...]:
    """Relabel letters by order of first appearance: (2, 2, 1, 1) -> (1, 1, 2, 2)."""
    labels: dict[int, int] = {}
    return tuple(labels.setdefault(c, len(labels) + 1) for c in word)


def wick_moment(cov, tol: float = 1e-12) -> float:
    """E[W_1 ... W_k] for a centred Gaussian vector with covariance ``cov``.

    Sum over all pairings of the products of covariance entries; zero when k
    is odd.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be a square matrix")
    if not np.all(np.isfinite(cov)):
        raise ValueError("covariance must be finite")
    if np.max(np.abs(cov - cov.T), initial=0.0) > tol:
        raise ValueError("covariance is not symmetric")
    k = cov.shape[0]
    if k == 0:
        return 1.0
    if k % 2:
        return 0.0
    arr = pairing_array(k // 2).astype(np.intp) - 1
    terms = np.prod(cov[arr[..., 0], arr[..., 1]], axis=1)
    return math.fsum(terms)
