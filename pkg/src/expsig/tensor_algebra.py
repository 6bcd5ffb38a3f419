"""Truncated tensor algebra over R^d and signatures of piecewise-linear paths.

A series truncated at level N stores one dense array per level k = 0..N.
Level k has length d**k and is indexed by words of length k through

    index(i_1, ..., i_k) = sum_p (i_p - 1) * d**(k - p)

with letters in 1..d.  The first letter is the most significant digit, so
the flat layout coincides with a C-order reshape to ``(d,) * k`` and the
lexicographic rank of a word equals its flat index.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ResourceError, ShapeError

#: Default cap on the total number of stored coefficients, sum_k d**k.
MAX_COEFFICIENTS = 10**7

Word = tuple[int, ...]


def coefficient_count(dimension: int, truncation: int) -> int:
    return sum(dimension**k for k in range(truncation + 1))


def check_size(dimension: int, truncation: int, cap: int | None = None) -> None:
    if dimension < 1:
        raise ValueError(f"dimension must be positive, got {dimension}")
    if truncation < 0:
        raise ValueError(f"truncation must be >= 0, got {truncation}")
    cap = MAX_COEFFICIENTS if cap is None else cap
    total = coefficient_count(dimension, truncation)
    if total > cap:
        raise ResourceError(
            f"tensor series with d={dimension}, N={truncation} needs {total} "
            f"coefficients (cap {cap})"
        )


def word_index(word: Sequence[int], dimension: int) -> int:
    idx = 0
    for letter in word:
        if not 1 <= letter <= dimension:
            raise ValueError(f"letter {letter} outside 1..{dimension}")
        idx = idx * dimension + (letter - 1)
    return idx


def index_word(index: int, length: int, dimension: int) -> Word:
    letters = []
    for _ in range(length):
        index, r = divmod(index, dimension)
        letters.append(r + 1)
    if index:
        raise ValueError("index out of range for this word length")
    return tuple(reversed(letters))


def words(dimension: int, length: int) -> Iterator[Word]:
    """All words of the given length in lexicographic (= index) order."""
    return itertools.product(range(1, dimension + 1), repeat=length)


@dataclass(frozen=True, eq=False)
class TensorSeries:
    """Immutable element of the truncated tensor algebra T^N(R^d)."""

    dimension: int
    truncation: int
    levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.levels) != self.truncation + 1:
            raise ShapeError(
                f"expected {self.truncation + 1} levels, got {len(self.levels)}"
            )
        frozen = []
        for k, arr in enumerate(self.levels):
            arr = np.array(arr, dtype=float).reshape(-1)
            if arr.size != self.dimension**k:
                raise ShapeError(
                    f"level {k} has {arr.size} entries, expected {self.dimension**k}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite coefficient at level {k}")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "levels", tuple(frozen))

    @classmethod
    def unit(cls, dimension: int, truncation: int) -> "TensorSeries":
        check_size(dimension, truncation)
        levels = [np.zeros(dimension**k) for k in range(truncation + 1)]
        levels[0][0] = 1.0
        return cls(dimension, truncation, tuple(levels))

    @classmethod
    def from_levels(cls, levels: Sequence[np.ndarray], dimension: int) -> "TensorSeries":
        return cls(dimension, len(levels) - 1, tuple(levels))

    def __getitem__(self, word: Sequence[int]) -> float:
        return project_word(self, word)

    def level(self, k: int) -> np.ndarray:
        """Level k reshaped to a k-way array of side d."""
        return self.levels[k].reshape((self.dimension,) * k)

    def allclose(self, other: "TensorSeries", atol: float = 1e-12, rtol: float = 0.0) -> bool:
        _check_compatible(self, other)
        return all(
            np.allclose(a, b, atol=atol, rtol=rtol) for a, b in zip(self.levels, other.levels)
        )

    def max_abs_diff(self, other: "TensorSeries") -> float:
        _check_compatible(self, other)
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.levels, other.levels))

    def items(self) -> Iterator[tuple[Word, float]]:
        for k in range(self.truncation + 1):
            for idx, w in enumerate(words(self.dimension, k)):
                yield w, float(self.levels[k][idx])


def _check_compatible(a: TensorSeries, b: TensorSeries) -> None:
    if a.dimension != b.dimension or a.truncation != b.truncation:
        raise ShapeError(
            f"incompatible series: (d={a.dimension}, N={a.truncation}) vs "
            f"(d={b.dimension}, N={b.truncation})"
        )


def tensor_mul(a: TensorSeries, b: TensorSeries) -> TensorSeries:
    """Truncated product: level k of the result is sum_{p+q=k} a_p (x) b_q."""
    _check_compatible(a, b)
    levels = []
    for k in range(a.truncation + 1):
        acc = np.zeros(a.dimension**k)
        for p in range(k + 1):
            acc += np.outer(a.levels[p], b.levels[k - p]).reshape(-1)
        levels.append(acc)
    return TensorSeries(a.dimension, a.truncation, tuple(levels))


def _exp_levels(v: np.ndarray, truncation: int) -> list[np.ndarray]:
    # v^{(x)k} / k! built by repeated outer products; v may carry a leading batch axis
    batch = v.shape[:-1]
    out = [np.ones(batch + (1,))]
    for k in range(1, truncation + 1):
        nxt = (out[-1][..., :, None] * v[..., None, :]) / k
        out.append(nxt.reshape(batch + (-1,)))
    return out


def tensor_exp(v: Sequence[float], truncation: int) -> TensorSeries:
    """Exponential of a pure level-1 element, using the closed form v^{(x)k}/k!."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError("tensor_exp needs finite input")
    check_size(v.size, truncation)
    return TensorSeries(v.size, truncation, tuple(_exp_levels(v, truncation)))


def batch_signature(increments: np.ndarray, truncation: int) -> list[np.ndarray]:
    """Signatures of a batch of polylines.

    ``increments`` has shape (batch, segments, d).  Returns a list of arrays,
    level k having shape (batch, d**k).  Segments are folded in one at a time
    with S <- S (x) exp(delta); memory does not grow with the segment count.
    """
    increments = np.asarray(increments, dtype=float)
    if increments.ndim != 3:
        raise ValueError("increments must have shape (batch, segments, d)")
    batch, segments, d = increments.shape
    if segments == 0:
        raise ValueError("need at least one segment")
    check_size(d, truncation)
    sig = _exp_levels(increments[:, 0, :], truncation)
    for s in range(1, segments):
        powers = _exp_levels(increments[:, s, :], truncation)
        # descending k so that lower levels are still the old values
        for k in range(truncation, 0, -1):
            acc = sig[k] + powers[k]
            for j in range(1, k):
                acc = acc + (sig[k - j][:, :, None] * powers[j][:, None, :]).reshape(batch, -1)
            sig[k] = acc
    return sig


def signature_of_piecewise_linear(
    increments: Iterable[Sequence[float]], truncation: int
) -> TensorSeries:
    """Signature of the polyline with the given segment increments."""
    inc = np.asarray([np.asarray(v, dtype=float).reshape(-1) for v in increments])
    if inc.size == 0 or inc.ndim != 2:
        raise ValueError("need a nonempty sequence of d-vectors")
    if not np.all(np.isfinite(inc)):
        raise ValueError("increments must be finite")
    levels = batch_signature(inc[None, :, :], truncation)
    return TensorSeries(inc.shape[1], truncation, tuple(lv[0] for lv in levels))


def project_word(s: TensorSeries, word: Sequence[int]) -> float:
    word = tuple(word)
    if len(word) > s.truncation:
        raise IndexError(f"word of length {len(word)} exceeds truncation {s.truncation}")
    return float(s.levels[len(word)][word_index(word, s.dimension)])


def shuffles(u: Sequence[int], v: Sequence[int]) -> list[Word]:
    """Shuffle product of two words, as a list with multiplicity."""
    u, v = tuple(u), tuple(v)
    n = len(u) + len(v)
    out = []
    for pos in itertools.combinations(range(n), len(u)):
        pos_set = set(pos)
        iu, iv = iter(u), iter(v)
        out.append(tuple(next(iu) if i in pos_set else next(iv) for i in range(n)))
    return out
