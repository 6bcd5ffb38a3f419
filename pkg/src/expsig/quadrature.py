"""Integration over ordered simplices of products of covariance densities.

The central quantity is, for a pairing pi of {1..2n},

    int_{0 <= u_1 < ... < u_2n <= T}  prod_{(l, j) in pi} f(u_l, u_j)  du.

Three Monte Carlo estimators are available:

``mc``
    sorted uniforms; the sorted vector has density (2n)!/T^{2n} on the simplex.
``sorted-stratified-mc``
    the same, with each coordinate Latin-hypercube stratified before sorting.
``importance``
    gaps between consecutive points drawn from a Dirichlet law whose
    parameter is 1 + e on the gap ending at each pair's right endpoint, where
    f ~ |u - v|**e near the diagonal.  Right endpoints are distinct and each
    lies inside its own pair's span, so every singular factor is divided by a
    matching power of a gap no longer than the pair's lag.  The weight is then
    bounded, which keeps the variance finite for every e > -1; plain sorted
    uniforms have infinite variance once e <= -1/2.

Randomness comes from Philox streams keyed by (seed, caller key, batch), so a
result depends only on the seed and the settings, never on execution order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from .errors import NumericError

METHODS = ("auto", "mc", "sorted-stratified-mc", "importance", "reduced")
_CHUNK = 1 << 16
_REDUCED_STREAM = 0x7265
ROUNDOFF_ULPS = 16
_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class QuadratureSettings:
    """Sampling controls.

    ``samples`` is the batch size.  At least ``batches`` batches run; after
    that, batches continue until stderr/|value| < ``target`` or
    ``max_batches`` is reached.  Without a target exactly ``batches`` run.
    """

    method: str = "auto"
    samples: int = 100_000
    seed: int = 0
    target: Optional[float] = None
    batches: int = 1
    max_batches: int = 64
    gauss_nodes: int = 24
    max_nonfinite_fraction: float = 1e-4

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown quadrature method {self.method!r}; choose from {METHODS}")
        if self.method in ("mc", "sorted-stratified-mc", "importance") and self.samples < 1000:
            raise ValueError(f"Monte Carlo methods need samples >= 1000, got {self.samples}")
        if self.samples < 1:
            raise ValueError("samples must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.batches < 1 or self.max_batches < self.batches:
            raise ValueError("need 1 <= batches <= max_batches")
        if self.target is not None and not self.target > 0:
            raise ValueError("target relative error must be positive")

    def echo(self) -> dict:
        return {
            "method": self.method,
            "samples": self.samples,
            "seed": self.seed,
            "target": self.target,
            "batches": self.batches,
            "max_batches": self.max_batches,
        }


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    stderr: float
    samples_used: int
    nonfinite: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.stderr) and self.stderr >= 0):
            raise NumericError(f"invalid stderr {self.stderr}")


def rng_for(seed: int, key: Sequence[int] = ()) -> np.random.Generator:
    """Counter-based generator for an independent substream."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# Running moments


@dataclass
class _Moments:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    nonfinite: int = 0

    def add(self, x: np.ndarray) -> None:
        bad = ~np.isfinite(x)
        if bad.any():
            self.nonfinite += int(bad.sum())
            x = x[~bad]
        nb = x.size
        if nb == 0:
            return
        mb = float(np.mean(x))
        m2b = float(np.sum((x - mb) ** 2))
        n = self.count + nb
        delta = mb - self.mean
        self.mean += delta * nb / n
        self.m2 += m2b + delta * delta * self.count * nb / n
        self.count = n

    @property
    def stderr(self) -> float:
        if self.count < 2:
            return 0.0
        sampling = math.sqrt(self.m2 / (self.count - 1) / self.count)
        # zero-variance estimators still carry the rounding of the mean
        return max(sampling, ROUNDOFF_ULPS * _EPS * abs(self.mean))


def _run_batches(draw: Callable[[np.random.Generator, int], np.ndarray], settings: QuadratureSettings,
                 key: Sequence[int]) -> QuadratureResult:
    mom = _Moments()
    for b in range(settings.max_batches):
        rng = rng_for(settings.seed, tuple(key) + (b,))
        remaining = settings.samples
        while remaining:
            size = min(remaining, _CHUNK)
            mom.add(draw(rng, size))
            remaining -= size
        total = mom.count + mom.nonfinite
        if mom.nonfinite > settings.max_nonfinite_fraction * total:
            raise NumericError(
                f"{mom.nonfinite} of {total} integrand samples were non-finite"
            )
        if b + 1 < settings.batches:
            continue
        if settings.target is None:
            break
        if mom.mean != 0 and mom.stderr / abs(mom.mean) < settings.target:
            break
    return QuadratureResult(mom.mean, mom.stderr, mom.count, mom.nonfinite)


# ---------------------------------------------------------------------------
# Deterministic helpers for integrable power singularities


def power_singular_integral(g: Callable[[float], float], a: float, b: float,
                            left: float = 0.0, right: float = 0.0,
                            epsabs: float = 1e-13, epsrel: float = 1e-11) -> float:
    """int_a^b (x - a)**left (b - x)**right g(x) dx for smooth g, exponents > -1."""
    if left == 0.0 and right == 0.0:
        val, _ = integrate.quad(g, a, b, epsabs=epsabs, epsrel=epsrel, limit=200)
    else:
        val, _ = integrate.quad(g, a, b, weight="alg", wvar=(left, right),
                                epsabs=epsabs, epsrel=epsrel, limit=200)
    return val


def triangle_power_integral(g: Callable[[float, float], float], exponent: float) -> float:
    """int_0^1 int_0^y (y - x)**exponent g(x, y) dx dy, exponent > -1.

    With x = y t the inner integral is y**(1 + exponent) times a regular
    integral of (1 - t)**exponent g(y t, y), so both levels are algebraic-weight
    rules applied to smooth functions.
    """
    if not exponent > -1:
        raise ValueError("exponent must exceed -1 for integrability")

    def inner(y):
        return power_singular_integral(lambda t: g(y * t, y), 0.0, 1.0, right=exponent)

    return power_singular_integral(inner, 0.0, 1.0, left=1.0 + exponent)


def rectangle_integral(f: Callable, s: float, t: float, sigma: float, tau: float,
                       epsabs: float = 1e-12, epsrel: float = 1e-10) -> float:
    """int_sigma^tau int_s^t f(u, v) du dv, with a breakpoint on the diagonal u = v."""

    def inner(v):
        pts = [v] if s < v < t else None
        val, _ = integrate.quad(lambda u: float(f(u, v)), s, t, points=pts,
                                epsabs=epsabs, epsrel=epsrel, limit=200)
        return val

    pts = [x for x in (s, t) if sigma < x < tau] or None
    with warnings.catch_warnings():
        # tight tolerances near the diagonal trip roundoff warnings; the result is still accurate
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(inner, sigma, tau, points=pts, epsabs=epsabs, epsrel=epsrel, limit=200)
    return val


def unit_square_normalization(hurst: float) -> float:
    """2H(2H-1) * int_0^1 int_0^y (y - x)**(2H - 2) dx dy; equals 1 analytically."""
    if not 0.5 < hurst < 1.0:
        raise ValueError(f"need 1/2 < H < 1, got {hurst}")
    e = 2.0 * hurst - 2.0
    return 2.0 * hurst * (2.0 * hurst - 1.0) * triangle_power_integral(lambda x, y: 1.0, e)


# ---------------------------------------------------------------------------
# Simplex sampling


def _check_pairing(pairing, n: int) -> list[tuple[int, int]]:
    pairs = [tuple(p) for p in pairing]
    pts = sorted(x for p in pairs for x in p)
    if len(pairs) != n or pts != list(range(1, 2 * n + 1)) or any(a >= b for a, b in pairs):
        raise ValueError(f"{pairing!r} is not a pairing of 1..{2 * n}")
    return pairs


def _sorted_uniform_draw(pairs, kernel, n: int, horizon: float, stratified: bool):
    dim = 2 * n
    log_scale = dim * math.log(horizon) - math.lgamma(dim + 1)
    idx_l = np.array([a - 1 for a, _ in pairs])
    idx_j = np.array([b - 1 for _, b in pairs])

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        if stratified:
            u = np.empty((size, dim))
            for c in range(dim):
                u[:, c] = (rng.permutation(size) + rng.random(size)) / size
        else:
            u = rng.random((size, dim))
        u.sort(axis=1)
        # ties have probability zero; redraw any row that hit one
        tied = np.any(np.diff(u, axis=1) == 0, axis=1) | (u[:, 0] == 0)
        while tied.any():
            fresh = np.sort(rng.random((int(tied.sum()), dim)), axis=1)
            u[tied] = fresh
            tied = np.any(np.diff(u, axis=1) == 0, axis=1) | (u[:, 0] == 0)
        x = u * horizon
        lag = x[:, idx_j] - x[:, idx_l]
        vals = kernel.f_lag(x[:, idx_l], x[:, idx_j], lag)
        return np.prod(np.broadcast_to(vals, lag.shape), axis=1) * math.exp(log_scale)

    return draw


def _log_gamma_variates(rng: np.random.Generator, shape: np.ndarray, size: int) -> np.ndarray:
    # log of Gamma(alpha) draws, via Gamma(alpha) = Gamma(alpha + 1) * U**(1/alpha);
    # stays finite even when the variate itself would underflow
    k = shape.size
    g1 = rng.standard_gamma(shape + 1.0, size=(size, k))
    u = rng.random((size, k))
    u = np.where(u == 0, np.nextafter(0, 1), u)
    return np.log(g1) + np.log(u) / shape


def _importance_draw(pairs, kernel, n: int, horizon: float, exponent: float):
    dim = 2 * n
    alpha = np.ones(dim + 1)
    right = np.array([b - 1 for _, b in pairs])  # 0-based gap index of gap ending at u_b
    alpha[right] = 1.0 + exponent
    log_inv_density_const = float(np.sum(special.gammaln(alpha)) - special.gammaln(alpha.sum()))
    log_scale = dim * math.log(horizon) + log_inv_density_const
    log_h = math.log(horizon)

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        log_g = _log_gamma_variates(rng, alpha, size)
        log_g -= special.logsumexp(log_g, axis=1, keepdims=True)
        pos = np.cumsum(np.exp(log_g), axis=1)
        log_w = np.full(size, log_scale)
        sign = np.ones(size)
        for (a, b), r in zip(pairs, right):
            # lag u_b - u_a is the sum of gaps a+1..b (1-based), i.e. columns a..b-1
            log_lag = special.logsumexp(log_g[:, a:b], axis=1)
            ratio = kernel.f_over_power(pos[:, a - 1] * horizon, pos[:, b - 1] * horizon,
                                        log_lag + log_h, log_g[:, r], exponent)
            ratio = np.broadcast_to(ratio, (size,))
            sign *= np.sign(ratio)
            with np.errstate(divide="ignore"):
                log_w += np.log(np.abs(ratio))
        return sign * np.exp(log_w)

    return draw


def resolve_method(kernel, settings: QuadratureSettings) -> str:
    if settings.method != "auto":
        return settings.method
    e = getattr(kernel, "diagonal_exponent", None)
    return "importance" if e is not None and -1 < e < 0 else "mc"


def simplex_pairing_integral(pairing, kernel, n: int, horizon: float,
                             settings: QuadratureSettings = QuadratureSettings(),
                             key: Sequence[int] = ()) -> QuadratureResult:
    """Unbiased estimate of the pairing integral over the simplex of side ``horizon``.

    ``key`` selects the random substream; callers pass something that
    identifies the pairing so different pairings get independent samples.
    """
    pairs = _check_pairing(pairing, n)
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    method = resolve_method(kernel, settings)
    if method == "reduced":
        from .combinatorics import canonical_pairing

        hurst = getattr(kernel, "hurst", None)
        if hurst is None or tuple(sorted(pairs)) != canonical_pairing(n):
            raise ValueError("the reduced method applies only to the canonical fBm pairing")
        res = reduced_canonical_integral(n, hurst, settings)
        scale = horizon ** (2.0 * hurst * n)
        return QuadratureResult(res.value * scale, res.stderr * scale, res.samples_used)
    if method == "importance":
        e = getattr(kernel, "diagonal_exponent", None)
        if e is None or not -1 < e <= 0:
            raise ValueError("importance sampling needs a kernel with a diagonal exponent in (-1, 0]")
        draw = _importance_draw(pairs, kernel, n, horizon, e)
    else:
        draw = _sorted_uniform_draw(pairs, kernel, n, horizon, method == "sorted-stratified-mc")
    return _run_batches(draw, settings, tuple(key))


# ---------------------------------------------------------------------------
# Reduced canonical integral


def _jacobi_unit(nodes: int, a: float, b: float):
    """Gauss-Jacobi rule on [0, 1] for the weight s**a (1 - s)**b."""
    x, w = special.roots_jacobi(nodes, b, a)
    return (x + 1.0) / 2.0, w / 2.0 ** (a + b + 1.0)


def reduced_integrand(x: np.ndarray, hurst: float) -> np.ndarray:
    """H^n prod_j (x_{j+1} - x_j)**(2H - 1) with x_{n+1} = 1; x has shape (..., n)."""
    n = x.shape[-1]
    nxt = np.concatenate([x[..., 1:], np.ones(x.shape[:-1] + (1,))], axis=-1)
    return hurst**n * np.prod((nxt - x) ** (2.0 * hurst - 1.0), axis=-1)


def _collapsed_simplex_rule(n: int, a: float, nodes: int):
    """Nodes and weights on {0 < x_1 < ... < x_n < 1} from stick-breaking coordinates.

    Top-down: g_n = s_n, g_k = s_k prod_{i>k} (1 - s_i), x_1 = prod_i (1 - s_i)
    with g_k = x_{k+1} - x_k.  The Jacobian prod_k (1 - s_k)**(k - 1) and the
    endpoint factors s_k**a (1 - s_k)**(a (k - 1)) are absorbed into one
    Gauss-Jacobi rule per coordinate; returned weights already divide them
    back out of the integrand.
    """
    rules = [_jacobi_unit(nodes, a, (a + 1.0) * (k - 1)) for k in range(1, n + 1)]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    s = np.stack([g.reshape(-1) for g in grids], axis=-1)
    w = np.prod(np.stack([g.reshape(-1) for g in wgrids], axis=-1), axis=-1)
    gaps = np.empty_like(s)
    remaining = np.ones(s.shape[0])
    for k in range(n - 1, -1, -1):
        gaps[:, k] = s[:, k] * remaining
        remaining = remaining * (1.0 - s[:, k])
    # x_1 = remaining, x_{k+1} = x_k + g_k
    x = remaining[:, None] + np.concatenate(
        [np.zeros((s.shape[0], 1)), np.cumsum(gaps[:, :-1], axis=1)], axis=1
    )
    jac = np.ones(s.shape[0])
    absorbed = np.ones(s.shape[0])
    for k in range(1, n + 1):
        sk = s[:, k - 1]
        jac *= (1.0 - sk) ** (k - 1)
        absorbed *= sk**a * (1.0 - sk) ** ((a + 1.0) * (k - 1))
    return x, w * jac / absorbed


def reduced_canonical_integral(n: int, hurst: float,
                               settings: QuadratureSettings = QuadratureSettings()) -> QuadratureResult:
    """Canonical-pairing fBm term on [0, 1] after integrating out u_2, u_4, ..., u_2n.

    What remains is the bounded n-dimensional integral of
    H^n prod_j (u_{2j+1} - u_{2j-1})**(2H - 1) over u_1 < u_3 < ... < u_{2n-1},
    with u_{2n+1} = 1.  Deterministic collapsed Gauss-Jacobi for n <= 3,
    sorted-uniform Monte Carlo above.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.5 <= hurst < 1.0:
        raise ValueError(f"need 1/2 <= H < 1, got {hurst}")
    a = 2.0 * hurst - 1.0
    if n <= 3:
        x, w = _collapsed_simplex_rule(n, a, settings.gauss_nodes)
        val = float(np.sum(w * reduced_integrand(x, hurst)))
        return QuadratureResult(val, 0.0, int(w.size))

    vol = 1.0 / math.factorial(n)

    def draw(rng, size):
        x = np.sort(rng.random((size, n)), axis=1)
        return reduced_integrand(x, hurst) * vol

    mc = QuadratureSettings(method="mc", samples=max(settings.samples, 1000), seed=settings.seed,
                            target=settings.target, batches=settings.batches,
                            max_batches=settings.max_batches)
    return _run_batches(draw, mc, (_REDUCED_STREAM, n))
