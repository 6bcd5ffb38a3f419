"""Independent checks on the continuous formula through the dyadic approximation.

Two routes, both built on the cell covariances

    c[i, j] = E[(W_{t_i} - W_{t_{i-1}}) (W_{t_j} - W_{t_{j-1}})],  t_k = k T / 2^m.

``discrete_expected_word`` evaluates the exact expected signature of the
piecewise-linear interpolation W(m) by summing over nondecreasing cell tuples
with 1/(multiplicity factorials) weights.  ``mc_signature_estimate`` samples
W(m) directly and averages pathwise signatures.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from . import kernels as _k
from .combinatorics import compatible_pairings, is_even_word
from .errors import NumericError, ResourceError
from .quadrature import rng_for
from .tensor_algebra import TensorSeries, batch_signature, check_size, word_index

MAX_DEPTH = 12
MAX_TUPLES = 10**8
MAX_MC_TRUNCATION = 6
PSD_CLIP = 1e-10


@dataclass(frozen=True, eq=False)
class CellCovariance:
    depth: int
    horizon: float
    matrix: np.ndarray

    @property
    def cells(self) -> int:
        return self.matrix.shape[0]


def dyadic_c_matrix(kernel: _k.KernelSpec, depth: int, horizon: float) -> CellCovariance:
    if not 0 <= depth <= MAX_DEPTH:
        raise ResourceError(f"depth m={depth} outside 0..{MAX_DEPTH}")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    M = 2**depth
    h = horizon / M
    if isinstance(kernel, _k.FbmKernel):
        # stationary increments: c depends on i - j only; avoids cancellation in R differences
        h2 = 2.0 * kernel.hurst
        lag = np.abs(np.subtract.outer(np.arange(M), np.arange(M))).astype(float)
        c = 0.5 * ((lag + 1) ** h2 + np.abs(lag - 1) ** h2 - 2 * lag**h2) * h**h2
    else:
        t = np.arange(M + 1) * h
        c = np.empty((M, M))
        for i in range(M):
            for j in range(i, M):
                c[i, j] = c[j, i] = _k.rect_increment_cov(kernel, t[i], t[i + 1], t[j], t[j + 1])
    c.setflags(write=False)
    return CellCovariance(depth, float(horizon), c)


def diagonal_mass(c: CellCovariance) -> float:
    return float(np.sum(np.abs(np.diag(c.matrix))))


# ---------------------------------------------------------------------------
# Exact discrete expectation


def tuple_count(cells: int, length: int) -> int:
    """Number of nondecreasing tuples of the given length over ``cells`` values."""
    return math.comb(cells + length - 1, length)


def _build_nondecreasing(lo: int, hi: int, length: int) -> np.ndarray:
    rows = np.arange(lo, hi)[:, None]
    for _ in range(length - 1):
        last = rows[:, -1]
        counts = hi - last
        starts = np.cumsum(counts) - counts
        rep = np.repeat(rows, counts, axis=0)
        offs = np.arange(int(counts.sum())) - np.repeat(starts, counts)
        rows = np.hstack([rep, (np.repeat(last, counts) + offs)[:, None]])
    return rows


def nondecreasing_chunks(cells: int, length: int, lo: int = 0,
                         max_rows: int = 1 << 20) -> Iterator[np.ndarray]:
    """Yield all tuples lo <= k_1 <= ... <= k_length < cells, in lexicographic chunks."""
    if length == 0:
        yield np.zeros((1, 0), dtype=np.int64)
        return
    if tuple_count(cells - lo, length) <= max_rows:
        yield _build_nondecreasing(lo, cells, length)
        return
    for v in range(lo, cells):
        for rest in nondecreasing_chunks(cells, length - 1, v, max_rows):
            yield np.hstack([np.full((rest.shape[0], 1), v, dtype=rest.dtype), rest])


def multiplicity_weights(rows: np.ndarray) -> np.ndarray:
    """1 / prod_k (#{p : k_p = k})! for sorted rows."""
    run = np.ones(rows.shape[0])
    denom = np.ones(rows.shape[0])
    for p in range(1, rows.shape[1]):
        same = rows[:, p] == rows[:, p - 1]
        run = np.where(same, run + 1, 1.0)
        denom *= run
    return 1.0 / denom


def discrete_expected_word(word: Sequence[int], c: CellCovariance,
                           max_tuples: int = MAX_TUPLES) -> float:
    """Coefficient of ``word`` in the expected signature of the dyadic interpolation."""
    word = tuple(word)
    if len(word) == 0:
        return 1.0
    if len(word) % 2 or not is_even_word(word):
        return 0.0
    count = tuple_count(c.cells, len(word))
    if count > max_tuples:
        raise ResourceError(
            f"word {','.join(map(str, word))} at depth m={c.depth} needs {count} cell tuples "
            f"(guard {max_tuples}); use the Monte Carlo oracle"
        )
    pairings = compatible_pairings(word)
    cm = c.matrix
    total = 0.0
    for rows in nondecreasing_chunks(c.cells, len(word)):
        w = multiplicity_weights(rows)
        acc = np.zeros(rows.shape[0])
        for pairing in pairings:
            prod = w.copy()
            for a, b in pairing:
                prod *= cm[rows[:, a - 1], rows[:, b - 1]]
            acc += prod
        total += math.fsum(acc)
    return total


# ---------------------------------------------------------------------------
# Monte Carlo over sampled dyadic paths


def factorize(c: CellCovariance, clip: float = PSD_CLIP) -> np.ndarray:
    """A factor L with L L^T = c; eigenvalues in [-clip, 0) are clipped to zero."""
    mat = c.matrix
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(mat)
    if vals.min() < -clip:
        raise NumericError(
            f"cell covariance has eigenvalue {vals.min():.3g} < -{clip:g}; kernel is not PSD"
        )
    factor = vecs * np.sqrt(np.clip(vals, 0.0, None))
    err = np.linalg.norm(factor @ factor.T - mat) / max(np.linalg.norm(mat), 1e-300)
    if err > 1e-10:
        raise NumericError(f"factorization residual {err:.3g} too large")
    return factor


@dataclass(frozen=True, eq=False)
class MCEstimate:
    mean: TensorSeries
    stderr: TensorSeries
    samples: int
    depth: int
    seed: int

    def value(self, word: Sequence[int]) -> float:
        return self.mean[word]

    def error(self, word: Sequence[int]) -> float:
        return self.stderr[word]


def mc_signature_estimate(kernel: _k.KernelSpec, dimension: int, depth: int, truncation: int,
                          horizon: float, samples: int, seed: int,
                          chunk: int = 2000, workers: int = 1,
                          c: Optional[CellCovariance] = None) -> MCEstimate:
    """Average the signatures of ``samples`` independent dyadic interpolations.

    Each chunk of paths uses its own substream (seed, chunk index); chunk
    sums are reduced in index order, so the estimate does not depend on
    ``workers``.
    """
    if truncation > MAX_MC_TRUNCATION:
        raise ResourceError(f"Monte Carlo oracle supports N <= {MAX_MC_TRUNCATION}")
    if samples < 2:
        raise ValueError("need at least two sample paths")
    check_size(dimension, truncation)
    c = dyadic_c_matrix(kernel, depth, horizon) if c is None else c
    L = factorize(c)
    M = c.cells
    sizes = [min(chunk, samples - s) for s in range(0, samples, chunk)]

    def run(idx_size):
        idx, size = idx_size
        rng = rng_for(seed, (idx,))
        z = rng.standard_normal((dimension, size, M))
        inc = np.einsum("dbm,km->bkd", z, L, optimize=True)
        sig = batch_signature(inc, truncation)
        return [s.sum(axis=0) for s in sig], [np.square(s).sum(axis=0) for s in sig]

    sums = [np.zeros(dimension**k) for k in range(truncation + 1)]
    sqs = [np.zeros(dimension**k) for k in range(truncation + 1)]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for s1, s2 in pool.map(run, enumerate(sizes)):
            for k in range(truncation + 1):
                sums[k] += s1[k]
                sqs[k] += s2[k]
    mean = [s / samples for s in sums]
    var = [np.maximum(q / samples - mu**2, 0.0) * samples / (samples - 1) for q, mu in zip(sqs, mean)]
    se = [np.sqrt(v / samples) for v in var]
    return MCEstimate(
        TensorSeries(dimension, truncation, tuple(mean)),
        TensorSeries(dimension, truncation, tuple(se)),
        samples, depth, seed,
    )
