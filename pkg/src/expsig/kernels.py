"""Strictly regular kernels presented through their covariance density f(u, v).

Every kernel exposes ``f(u, v)``, the symmetric integrable function whose
double integrals over rectangles give increment covariances

    E[(W_t - W_s)(W_tau - W_sigma)] = int_sigma^tau int_s^t f(u, v) du dv.

Evaluators must be pure; kernels are immutable and may be shared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

import numpy as np
from scipy import integrate, special

from . import quadrature as _quad
from .errors import SingularityError


class KernelSpec:
    """Common interface; concrete kernels override what they can do better."""

    #: Exponent e with f(u, v) ~ |u - v|**e near the diagonal (None: bounded/unknown).
    diagonal_exponent: Optional[float] = None

    def f(self, u, v):
        raise NotImplementedError

    def f_lag(self, u, v, lag):
        """f(u, v) given an accurately computed lag = |u - v|.

        Samplers that build points from tiny gaps pass the lag separately so
        that stationary singular kernels do not lose it to cancellation.
        """
        return self.f(u, v)

    def f_over_power(self, u, v, log_lag, log_ref, exponent):
        """f(u, v) / ref**exponent, given log |u - v| and log ref."""
        return self.f_lag(u, v, np.exp(log_lag)) * np.exp(-exponent * np.asarray(log_ref))

    def closed_covariance(self, t, s) -> Optional[float]:
        return None

    def rect(self, s, t, sigma, tau) -> Optional[float]:
        """Closed-form rectangle integral of f, when available."""
        return None

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class FbmKernel(KernelSpec):
    """Fractional Brownian motion with Hurst parameter 1/2 < H < 1."""

    hurst: float

    def __post_init__(self):
        if not 0.5 < self.hurst < 1.0:
            raise ValueError(f"fBm kernel needs 1/2 < H < 1, got H={self.hurst}")

    @property
    def diagonal_exponent(self) -> float:
        return 2.0 * self.hurst - 2.0

    @property
    def prefactor(self) -> float:
        return self.hurst * (2.0 * self.hurst - 1.0)

    def f(self, u, v):
        lag = np.abs(np.asarray(u, dtype=float) - np.asarray(v, dtype=float))
        if np.any(lag == 0):
            raise SingularityError("fBm covariance density is singular on u = v")
        out = self.prefactor * lag ** self.diagonal_exponent
        return float(out) if np.ndim(out) == 0 else out

    def f_lag(self, u, v, lag):
        return self.prefactor * np.asarray(lag, dtype=float) ** self.diagonal_exponent

    def f_over_power(self, u, v, log_lag, log_ref, exponent):
        e = self.diagonal_exponent
        if exponent != e:
            return super().f_over_power(u, v, log_lag, log_ref, exponent)
        # (lag/ref)**e computed in logs: the lag may underflow when H is near 1/2
        return self.prefactor * np.exp(e * (np.asarray(log_lag) - np.asarray(log_ref)))

    def closed_covariance(self, t, s):
        h2 = 2.0 * self.hurst
        return 0.5 * (t**h2 + s**h2 - abs(t - s) ** h2)

    def rect(self, s, t, sigma, tau):
        r = self.closed_covariance
        return r(t, tau) - r(s, tau) - r(t, sigma) + r(s, sigma)

    def describe(self) -> dict:
        return {"kernel": "fbm", "hurst": self.hurst}

    # Molchan-Golosov representation; used only for regularity diagnostics.

    @property
    def c_h(self) -> float:
        h = self.hurst
        return math.sqrt(h * (2 * h - 1) / special.beta(2 - 2 * h, h - 0.5))

    def volterra_k(self, t: float, s: float) -> float:
        h = self.hurst
        if t <= s:
            return 0.0
        if s <= 0:
            return math.inf
        val, _ = integrate.quad(
            lambda u: u ** (h - 0.5), s, t, weight="alg", wvar=(h - 1.5, 0.0)
        )
        return self.c_h * s ** (0.5 - h) * val

    def volterra_dk(self, t: float, s: float) -> float:
        h = self.hurst
        if t <= s:
            return 0.0
        return self.c_h * s ** (0.5 - h) * (t - s) ** (h - 1.5) * t ** (h - 0.5)

    def as_volterra(self) -> "VolterraKernel":
        h = self.hurst
        return VolterraKernel(
            K=self.volterra_k,
            dK=self.volterra_dk,
            dk_exponent=h - 1.5,
            origin_exponent=1.0 - 2.0 * h,
            name=f"fbm-volterra(H={h})",
        )


@dataclass(frozen=True)
class ExplicitF(KernelSpec):
    """A kernel given directly by its density f, optionally with a closed rectangle integral."""

    func: Callable[[Any, Any], Any]
    rect_func: Optional[Callable[[float, float, float, float], float]] = None
    diagonal_exponent: Optional[float] = None
    config: Mapping[str, Any] = field(default_factory=dict)

    def f(self, u, v):
        out = self.func(u, v)
        if np.ndim(out) == 0:
            return float(out)
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(u, v).shape)

    def rect(self, s, t, sigma, tau):
        if self.rect_func is None:
            return None
        return float(self.rect_func(s, t, sigma, tau))

    def describe(self) -> dict:
        return dict(self.config) if self.config else {"kernel": "explicit_f"}


@dataclass(frozen=True)
class VolterraKernel(KernelSpec):
    """W_t = int_0^t K(t, r) dB_r, presented through K and its t-derivative dK.

    f(u, v) = int_0^{min(u, v)} dK(u, r) dK(v, r) dr is evaluated by adaptive
    quadrature.  ``dk_exponent`` (dK(t, r) ~ (t - r)**a as t -> r) and
    ``origin_exponent`` (integrand ~ r**b as r -> 0) switch the inner rule to
    an algebraic-weight one.
    """

    K: Callable[[float, float], float]
    dK: Callable[[float, float], float]
    dk_exponent: float = 0.0
    origin_exponent: float = 0.0
    epsrel: float = 1e-8
    limit: int = 200
    name: str = "volterra"
    config: Mapping[str, Any] = field(default_factory=dict)

    def _f_scalar(self, u: float, v: float) -> float:
        lo = min(u, v)
        if lo <= 0:
            return 0.0
        a, b = self.dk_exponent, self.origin_exponent
        if a == 0.0 and b == 0.0:
            val, _ = integrate.quad(
                lambda r: self.dK(u, r) * self.dK(v, r), 0.0, lo,
                epsrel=self.epsrel, limit=self.limit,
            )
            return val
        if u == v and a != 0.0:
            raise SingularityError("Volterra density is singular on u = v")
        hi = max(u, v)

        def smooth(r):
            # strip the known endpoint powers; the rest is regular on [0, lo], so
            # nudging the endpoints avoids 0 * inf without changing the integral
            r = min(max(r, lo * 1e-12), lo * (1.0 - 1e-12))
            num = self.dK(lo, r) * (lo - r) ** (-a) * self.dK(hi, r)
            return num * r ** (-b) if b else num

        val, _ = integrate.quad(
            smooth, 0.0, lo, weight="alg", wvar=(b, a), epsrel=self.epsrel, limit=self.limit
        )
        return val

    def f(self, u, v):
        if np.ndim(u) == 0 and np.ndim(v) == 0:
            return self._f_scalar(float(u), float(v))
        uu, vv = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        out = np.empty(uu.shape)
        for idx in np.ndindex(uu.shape):
            out[idx] = self._f_scalar(float(uu[idx]), float(vv[idx]))
        return out

    @property
    def diagonal_exponent(self):
        return 2.0 * self.dk_exponent + 1.0 if self.dk_exponent else None

    def describe(self) -> dict:
        return dict(self.config) if self.config else {"kernel": self.name}


# ---------------------------------------------------------------------------
# Module-level operations


def f_eval(kernel: KernelSpec, u: float, v: float) -> float:
    return kernel.f(u, v)


def _check_time(name: str, x: float, horizon: Optional[float]) -> None:
    if not math.isfinite(x) or x < 0 or (horizon is not None and x > horizon):
        raise ValueError(f"{name}={x} outside [0, {horizon if horizon is not None else 'inf'})")


def rect_increment_cov(
    kernel: KernelSpec, s: float, t: float, sigma: float, tau: float,
    horizon: Optional[float] = None,
) -> float:
    """E[(W_t - W_s)(W_tau - W_sigma)]."""
    for name, x in (("s", s), ("t", t), ("sigma", sigma), ("tau", tau)):
        _check_time(name, x, horizon)
    if s > t or sigma > tau:
        raise ValueError(f"inverted interval: [{s}, {t}] x [{sigma}, {tau}]")
    if s == t or sigma == tau:
        return 0.0
    closed = kernel.rect(s, t, sigma, tau)
    if closed is not None:
        return float(closed)
    return _quad.rectangle_integral(kernel.f, s, t, sigma, tau)


def covariance(kernel: KernelSpec, s: float, t: float, horizon: float) -> float:
    """R(t, s) = int_0^t int_0^s f(u, v) du dv."""
    _check_time("s", s, horizon)
    _check_time("t", t, horizon)
    closed = kernel.closed_covariance(t, s)
    if closed is not None:
        return float(closed)
    return rect_increment_cov(kernel, 0.0, t, 0.0, s, horizon)


@dataclass
class RegularityReport:
    """Outcome of numerical spot checks of the strict-regularity conditions."""

    violations: list[str] = field(default_factory=list)
    k2_decay_exponents: dict[float, float] = field(default_factory=dict)
    total_variation: dict[float, float] = field(default_factory=dict)
    k3_integral: float = math.nan

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_strict_regularity(
    kernel: VolterraKernel,
    grid,
    horizon: Optional[float] = None,
    eps: tuple[float, ...] = (1e-2, 1e-4, 1e-6),
    k2_atol: float = 1e-10,
    k2_min_exponent: float = 1e-2,
    k1_rtol: float = 1e-4,
    tv_points: int = 400,
) -> RegularityReport:
    """Spot-check absolute continuity, K(r+, r) = 0 and square-integrable variation.

    Only grid points r in (0, T) are examined.  K(r + eps, r) passes the
    vanishing test when it is below ``k2_atol`` at the smallest eps, or when it
    decreases monotonically with a fitted decay exponent of at least
    ``k2_min_exponent``.  None of the tolerances are intrinsic to the
    conditions; they are practical defaults.
    """
    grid = np.sort(np.asarray(grid, dtype=float))
    horizon = float(grid[-1]) if horizon is None else float(horizon)
    report = RegularityReport()
    rs = [r for r in grid if 0 < r < horizon]
    tv_sq = []
    for r in rs:
        scale = horizon - r
        # (K2)
        vals = np.array([abs(kernel.K(r + e * scale, r)) for e in eps])
        k2_ok = True
        if not np.all(np.isfinite(vals)):
            k2_ok = False
            report.violations.append(f"K2: non-finite K(r+eps, r) at r={r:g}")
        elif vals[-1] > k2_atol:
            ratios = np.log(vals[:-1] / vals[1:]) / np.log(np.asarray(eps[:-1]) / np.asarray(eps[1:]))
            expo = float(np.min(ratios))
            report.k2_decay_exponents[r] = expo
            if not (np.all(np.diff(vals) < 0) and expo >= k2_min_exponent):
                k2_ok = False
                report.violations.append(
                    f"K2: K(r+, r) does not vanish at r={r:g} (|K(r+eps, r)|={vals[-1]:.3g})"
                )
        else:
            report.k2_decay_exponents[r] = math.inf
        # (K1): K(t, r) - K(r+, r) should equal the integral of dK
        t = r + 0.5 * scale
        dk_val = kernel.dK(t, r)
        if not math.isfinite(dk_val):
            report.violations.append(f"K1: non-finite dK({t:g}, {r:g})")
        else:
            a = kernel.dk_exponent
            if a:
                def smooth(x, r=r, t=t):
                    x = min(max(x, r + 1e-12 * (t - r)), t)
                    return kernel.dK(x, r) * (x - r) ** (-a)

                integ, _ = integrate.quad(smooth, r, t, weight="alg", wvar=(a, 0.0), limit=kernel.limit)
            else:
                integ, _ = integrate.quad(lambda x: kernel.dK(x, r), r, t, limit=kernel.limit)
            k_t = kernel.K(t, r)
            k_0 = 0.0 if k2_ok else kernel.K(r + eps[-1] * scale, r)
            if abs(integ - (k_t - k_0)) > k1_rtol * max(1.0, abs(k_t)):
                report.violations.append(
                    f"K1: K({t:g}, {r:g}) = {k_t:.6g} but integral of dK = {integ:.6g}"
                )
        # (K3): total variation of K(., r) on (r, T]
        ts = r + scale * np.geomspace(1e-8, 1.0, tv_points)
        ks = np.array([kernel.K(x, r) for x in ts])
        tv = float(np.sum(np.abs(np.diff(ks))) + abs(ks[0]))
        report.total_variation[r] = tv
        if not math.isfinite(tv):
            report.violations.append(f"K3: infinite total variation at r={r:g}")
        tv_sq.append(tv * tv)
    if len(rs) >= 2:
        report.k3_integral = float(integrate.trapezoid(tv_sq, rs))
        if not math.isfinite(report.k3_integral):
            report.violations.append("K3: squared total variation is not integrable on the grid")
    return report


# ---------------------------------------------------------------------------
# Configuration


def _lambdify(expr: str, names: tuple[str, ...]):
    import sympy

    symbols = sympy.symbols(names)
    parsed = sympy.sympify(expr)
    unknown = parsed.free_symbols - set(symbols)
    if unknown:
        raise ValueError(f"expression {expr!r} uses unknown symbols {sorted(map(str, unknown))}")
    return sympy.lambdify(symbols, parsed, modules="numpy")


def kernel_from_config(cfg: Mapping[str, Any]) -> KernelSpec:
    """Build a kernel from a JSON-style mapping.

    ``{"kernel": "fbm", "hurst": 0.75}``,
    ``{"kernel": "explicit_f", "f": "1", "rect": "(t - s)*(tau - sigma)"}`` or
    ``{"kernel": "volterra", "K": "t - s", "dK": "1"}``.  Expressions are
    parsed with sympy; f uses (u, v), rect uses (s, t, sigma, tau) and K, dK
    use (t, s).
    """
    kind = cfg.get("kernel")
    if kind == "fbm":
        if "hurst" not in cfg:
            raise ValueError("fbm kernel needs 'hurst'")
        return FbmKernel(float(cfg["hurst"]))
    if kind == "explicit_f":
        if "f" not in cfg:
            raise ValueError("explicit_f kernel needs an 'f' expression in u, v")
        f = _lambdify(str(cfg["f"]), ("u", "v"))
        rect = _lambdify(str(cfg["rect"]), ("s", "t", "sigma", "tau")) if cfg.get("rect") else None
        expo = cfg.get("diagonal_exponent")
        return ExplicitF(
            f, rect, None if expo is None else float(expo), config=dict(cfg)
        )
    if kind == "volterra":
        if "K" not in cfg or "dK" not in cfg:
            raise ValueError("volterra kernel needs 'K' and 'dK' expressions in t, s")
        K = _lambdify(str(cfg["K"]), ("t", "s"))
        dK = _lambdify(str(cfg["dK"]), ("t", "s"))
        return VolterraKernel(
            K=lambda t, s: float(K(t, s)),
            dK=lambda t, s: float(dK(t, s)),
            dk_exponent=float(cfg.get("dk_exponent", 0.0)),
            origin_exponent=float(cfg.get("origin_exponent", 0.0)),
            config=dict(cfg),
        )
    raise ValueError(f"unknown kernel type {kind!r}")
