"""Expected-signature coefficients as sums of simplex integrals over pairings.

For an even word (i_1, ..., i_2n) in which every letter occurs an even number
of times, the coefficient is

    sum over pairings pi joining equal letters of
        int_{0 < u_1 < ... < u_2n < T} prod_{(l, j) in pi} f(u_l, u_j) du,

and every other coefficient vanishes.  Components are iid, so words that
differ only by a renaming of letters share one computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import quadrature as _quad
from .combinatorics import (
    Pairing,
    canonical_pairing,
    compatible_pairings,
    enumerate_pairings,
    is_even_word,
    letter_pattern,
    pairing_rank,
)
from .errors import ResourceError
from .kernels import FbmKernel, KernelSpec
from .quadrature import QuadratureResult, QuadratureSettings
from .tensor_algebra import TensorSeries, Word, check_size, word_index, words

MAX_TRUNCATION = 8
MAX_DIMENSION = 4

_ZERO = QuadratureResult(0.0, 0.0, 0)
_ONE = QuadratureResult(1.0, 0.0, 0)


@dataclass(frozen=True)
class Term:
    word: Word
    value: float
    stderr: float
    pairings: int


@dataclass
class ExpectedSignatureReport:
    dimension: int
    truncation: int
    horizon: float
    terms: list[Term]
    kernel: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        self._index = {t.word: t for t in self.terms}

    def term(self, word: Sequence[int]) -> Optional[Term]:
        return self._index.get(tuple(word))

    def coefficient(self, word: Sequence[int]) -> float:
        t = self._index.get(tuple(word))
        return 0.0 if t is None else t.value

    def to_tensor(self) -> TensorSeries:
        levels = [np.zeros(self.dimension**k) for k in range(self.truncation + 1)]
        for t in self.terms:
            levels[len(t.word)][word_index(t.word, self.dimension)] = t.value
        return TensorSeries(self.dimension, self.truncation, tuple(levels))


def _pairing_result(pairing: Pairing, kernel: KernelSpec, horizon: float,
                    settings: QuadratureSettings, cache: Optional[dict]) -> QuadratureResult:
    if cache is not None and pairing in cache:
        return cache[pairing]
    n = len(pairing)
    res = _quad.simplex_pairing_integral(
        pairing, kernel, n, horizon, settings, key=(n, pairing_rank(pairing))
    )
    if cache is not None:
        cache[pairing] = res
    return res


def expected_word_coefficient(word: Sequence[int], kernel: KernelSpec, horizon: float,
                              settings: QuadratureSettings = QuadratureSettings(),
                              cache: Optional[dict] = None) -> QuadratureResult:
    """One coefficient of the expected signature on [0, horizon].

    Pairing integrals use the random substream (seed, n, rank of the pairing),
    so the same pairing always yields the same estimate for a given seed and
    per-pairing errors are independent.
    """
    word = tuple(word)
    if not word:
        return _ONE
    if len(word) % 2 or not is_even_word(word):
        return _ZERO
    value, var, used = 0.0, 0.0, 0
    for pairing in compatible_pairings(word):
        res = _pairing_result(pairing, kernel, horizon, settings, cache)
        value += res.value
        var += res.stderr**2
        used += res.samples_used
    return QuadratureResult(value, math.sqrt(var), used)


def _check_guards(dimension: int, truncation: int) -> None:
    if not 1 <= dimension <= MAX_DIMENSION:
        raise ResourceError(f"dimension d={dimension} outside 1..{MAX_DIMENSION}")
    if not 0 <= truncation <= MAX_TRUNCATION:
        raise ResourceError(f"truncation N={truncation} outside 0..{MAX_TRUNCATION}")
    check_size(dimension, truncation)


def even_words(dimension: int, truncation: int):
    """Words of even length <= truncation with every letter repeated an even number of times."""
    for k in range(0, truncation + 1, 2):
        for w in words(dimension, k):
            if is_even_word(w):
                yield w


def expected_signature(kernel: KernelSpec, dimension: int, truncation: int, horizon: float,
                       settings: QuadratureSettings = QuadratureSettings()) -> ExpectedSignatureReport:
    _check_guards(dimension, truncation)
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    cache: dict = {}
    by_pattern: dict[tuple[int, ...], QuadratureResult] = {}
    terms = []
    for w in even_words(dimension, truncation):
        pattern = letter_pattern(w)
        if pattern not in by_pattern:
            by_pattern[pattern] = expected_word_coefficient(pattern, kernel, horizon, settings, cache)
        res = by_pattern[pattern]
        terms.append(Term(w, res.value, res.stderr, len(compatible_pairings(w))))
    return ExpectedSignatureReport(
        dimension, truncation, horizon, terms, kernel.describe(), settings.echo()
    )


def brownian_coefficient(word: Sequence[int], horizon: float = 1.0) -> float:
    """(T/2)^n / n! when the word is n adjacent equal-letter pairs, else 0."""
    word = tuple(word)
    if len(word) % 2:
        return 0.0
    if any(word[2 * i] != word[2 * i + 1] for i in range(len(word) // 2)):
        return 0.0
    n = len(word) // 2
    return (horizon / 2.0) ** n / math.factorial(n)


def brownian_expected_signature(dimension: int, truncation: int,
                                horizon: float = 1.0) -> ExpectedSignatureReport:
    _check_guards(dimension, truncation)
    terms = [
        Term(w, brownian_coefficient(w, horizon), 0.0, len(compatible_pairings(w)))
        for w in even_words(dimension, truncation)
    ]
    return ExpectedSignatureReport(
        dimension, truncation, horizon, terms, {"kernel": "brownian"}, {"method": "closed-form"}
    )


def canonical_In(n: int, hurst: float,
                 settings: QuadratureSettings = QuadratureSettings()) -> QuadratureResult:
    """fBm term of the pairing {(1,2), (3,4), ...} on [0, 1]."""
    if not 0.5 < hurst < 1.0:
        raise ValueError(f"need 1/2 < H < 1, got {hurst}")
    return _quad.reduced_canonical_integral(n, hurst, settings)


def cross_pairing_bound(hurst: float) -> float:
    """Upper bound 1/2 (1 - 2^(1-2H)) on any non-canonical fBm pairing term on [0, 1]."""
    if not 0.5 <= hurst <= 1.0:
        raise ValueError(f"need 1/2 <= H <= 1, got {hurst}")
    return 0.5 * (1.0 - 2.0 ** (1.0 - 2.0 * hurst))


def noncanonical_terms(n: int, hurst: float,
                       settings: QuadratureSettings = QuadratureSettings()) -> list[tuple[Pairing, QuadratureResult]]:
    """Every non-canonical pairing term of the fBm single-letter word of length 2n on [0, 1]."""
    kernel = FbmKernel(hurst)
    canon = canonical_pairing(n)
    return [
        (p, _pairing_result(p, kernel, 1.0, settings, None))
        for p in enumerate_pairings(n)
        if p != canon
    ]


def fbm_coefficient_closed_scaling(word: Sequence[int], hurst: float, horizon: float,
                                   settings: QuadratureSettings = QuadratureSettings()) -> QuadratureResult:
    """fBm coefficient on [0, T] from the unit-horizon integrals times T^(2Hn).

    Substituting u = T v in the simplex integral turns each of the n density
    factors into T^(2H-2) times its unit-horizon value and the 2n volume
    elements into T^(2n): T^(2Hn) overall.
    """
    word = tuple(word)
    res = expected_word_coefficient(word, FbmKernel(hurst), 1.0, settings)
    scale = horizon ** (2.0 * hurst * (len(word) // 2))
    return QuadratureResult(res.value * scale, res.stderr * scale, res.samples_used)
