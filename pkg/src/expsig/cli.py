"""Command-line front end: ``expsig compute | verify | hsweep``.

Settings come from built-in defaults, then an optional JSON config file
(``--config``), then command-line flags, later sources winning.  Output is
JSON (compute, verify) or CSV (hsweep), written to ``--out`` or stdout, with
sorted keys and shortest round-trip float formatting so that identical inputs
give byte-identical files.

Exit codes: 0 success; 1 verification disagreement or numerical failure;
2 invalid configuration; 3 a size/cost guard refused the run.  Every failure
prints exactly one line ``expsig: error: <kind>: <reason>`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field, fields
from typing import Any, Optional, Sequence

from . import discrete_oracle as _disc
from .combinatorics import letter_pattern
from .errors import NumericError, ResourceError
from .expected_signature import (
    _check_guards,
    canonical_In,
    cross_pairing_bound,
    even_words,
    expected_signature,
    expected_word_coefficient,
    noncanonical_terms,
)
from .kernels import KernelSpec, kernel_from_config
from .quadrature import QuadratureSettings, resolve_method

KERNEL_KEYS = ("kernel", "hurst", "f", "rect", "diagonal_exponent", "K", "dK",
               "dk_exponent", "origin_exponent")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str = "compute"
    kernel: dict = field(default_factory=lambda: {"kernel": "fbm", "hurst": 0.75})
    d: int = 1
    N: int = 2
    T: float = 1.0
    method: str = "auto"
    samples: int = 100_000
    seed: int = 0
    target: Optional[float] = None
    batches: int = 1
    depth: int = 6
    mc_depth: int = 10
    paths: int = 100_000
    workers: int = 1
    grid: list = field(default_factory=lambda: [0.51, 0.55, 0.6, 0.75])
    n: int = 2
    out: Optional[str] = None

    def settings(self) -> QuadratureSettings:
        return QuadratureSettings(method=self.method, samples=self.samples, seed=self.seed,
                                  target=self.target, batches=self.batches,
                                  max_batches=max(64, self.batches))

    def kernel_spec(self) -> KernelSpec:
        return kernel_from_config(self.kernel)


def _split_grid(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad H grid {text!r}") from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--kernel", choices=("fbm", "explicit_f", "volterra"))
    common.add_argument("--hurst", type=float)
    common.add_argument("--f", dest="f", help="explicit density f(u, v) (sympy expression)")
    common.add_argument("--rect", help="closed rectangle integral in s, t, sigma, tau")
    common.add_argument("-d", "--dimension", dest="d", type=int)
    common.add_argument("-N", "--truncation", dest="N", type=int)
    common.add_argument("-T", "--horizon", dest="T", type=float)
    common.add_argument("--method", choices=("auto", "mc", "sorted-stratified-mc", "importance", "reduced"))
    common.add_argument("--samples", type=int, help="simplex samples per batch")
    common.add_argument("--batches", type=int)
    common.add_argument("--target", type=float, help="target relative error")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output path (default stdout)")

    parser = _Parser(prog="expsig", description="Expected signatures of Gaussian processes")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("compute", parents=[common], argument_default=argparse.SUPPRESS,
                   help="expected-signature coefficients as JSON")
    ver = sub.add_parser("verify", parents=[common], argument_default=argparse.SUPPRESS,
                         help="compare against the dyadic and Monte Carlo oracles")
    ver.add_argument("-m", "--depth", dest="depth", type=int, help="dyadic depth of the exact discrete sum")
    ver.add_argument("--mc-depth", dest="mc_depth", type=int, help="dyadic depth of sampled paths")
    ver.add_argument("--paths", type=int, help="number of sampled paths")
    ver.add_argument("--workers", type=int)
    hs = sub.add_parser("hsweep", parents=[common], argument_default=argparse.SUPPRESS,
                        help="canonical term and cross-pairing bound over a grid of H (CSV)")
    hs.add_argument("--grid", type=_split_grid, help="comma-separated H values")
    hs.add_argument("-n", dest="n", type=int, help="half word length")
    return parser


def _coerce(cfg: RunConfig) -> None:
    for f in fields(RunConfig):
        val = getattr(cfg, f.name)
        if val is None:
            continue
        try:
            if f.name in ("d", "N", "samples", "seed", "batches", "depth", "mc_depth", "paths",
                          "workers", "n"):
                if isinstance(val, float) and not val.is_integer():
                    raise ValueError
                setattr(cfg, f.name, int(val))
            elif f.name in ("T", "target"):
                setattr(cfg, f.name, float(val))
            elif f.name == "grid":
                setattr(cfg, f.name, [float(x) for x in val])
        except (TypeError, ValueError):
            raise ConfigError(f"invalid value for {f.name}: {val!r}") from None


def load_config(argv: Sequence[str]) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    cfg = RunConfig(subcommand=args.pop("subcommand"))
    merged: dict[str, Any] = {}
    path = args.pop("config", None)
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        if isinstance(data.get("kernel"), dict):
            merged["kernel"] = dict(data.pop("kernel"))
        else:
            merged["kernel"] = {k: data.pop(k) for k in KERNEL_KEYS if k in data}
        merged.update(data)
    cli_kernel = {k: args.pop(k) for k in KERNEL_KEYS if k in args}
    kernel = dict(merged.pop("kernel", None) or cfg.kernel)
    if cli_kernel.get("kernel") not in (None, kernel.get("kernel")):
        kernel = {}
    kernel.update(cli_kernel)
    merged.update(args)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for k, v in merged.items():
        setattr(cfg, k, v)
    cfg.kernel = kernel
    _coerce(cfg)
    return cfg


def validate(cfg: RunConfig) -> tuple[KernelSpec, QuadratureSettings]:
    """Check every downstream guard before any computation starts."""
    try:
        kernel = cfg.kernel_spec()
        settings = cfg.settings()
    except ResourceError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    if not cfg.T > 0:
        raise ConfigError("horizon T must be positive")
    if cfg.d < 1 or cfg.N < 0:
        raise ConfigError("need d >= 1 and N >= 0")
    if resolve_method(kernel, settings) == "reduced":
        raise ConfigError("method 'reduced' only applies to canonical_In; use hsweep")
    if cfg.subcommand in ("compute", "verify"):
        _check_guards(cfg.d, cfg.N)
    if cfg.subcommand == "verify":
        if cfg.N > _disc.MAX_MC_TRUNCATION:
            raise ResourceError(f"verify supports N <= {_disc.MAX_MC_TRUNCATION}")
        for m in (cfg.depth, cfg.mc_depth):
            if not 1 <= m <= _disc.MAX_DEPTH:
                raise ResourceError(f"depth m={m} outside 1..{_disc.MAX_DEPTH}")
        if cfg.paths < 2 or cfg.workers < 1:
            raise ConfigError("need paths >= 2 and workers >= 1")
        for w in even_words(cfg.d, cfg.N):
            count = _disc.tuple_count(2**cfg.depth, len(w))
            if count > _disc.MAX_TUPLES:
                raise ResourceError(
                    f"word {_word_str(w)} at depth m={cfg.depth} needs {count} cell tuples "
                    f"(guard {_disc.MAX_TUPLES})"
                )
    if cfg.subcommand == "hsweep":
        if cfg.n < 1 or 2 * cfg.n > 16:
            raise ConfigError("need 1 <= n <= 8")
        if not cfg.grid or any(not 0.5 < h < 1.0 for h in cfg.grid):
            raise ConfigError("H grid must be nonempty and inside (1/2, 1)")
    return kernel, settings


# ---------------------------------------------------------------------------
# Workflows


def _word_str(word) -> str:
    return ",".join(str(x) for x in word)


def _meta(cfg: RunConfig, kernel: KernelSpec, settings: QuadratureSettings) -> dict:
    return {
        "kernel": kernel.describe(),
        "d": cfg.d,
        "N": cfg.N,
        "T": cfg.T,
        "seed": cfg.seed,
        "method": resolve_method(kernel, settings),
        "samples": cfg.samples,
        "batches": cfg.batches,
        "target": cfg.target,
    }


def cmd_compute(cfg: RunConfig) -> tuple[dict, int]:
    kernel, settings = validate(cfg)
    report = expected_signature(kernel, cfg.d, cfg.N, cfg.T, settings)
    terms = [
        {"word": _word_str(t.word), "value": t.value, "stderr": t.stderr, "pairings": t.pairings}
        for t in report.terms
    ]
    return {"meta": _meta(cfg, kernel, settings), "terms": terms}, 0


def agree(a: float, ea: float, b: float, eb: float, k: float = 3.0) -> bool:
    # the relative floor only absorbs round-off when both error bars vanish
    return abs(a - b) <= k * math.hypot(ea, eb) + 1e-10 * max(1.0, abs(a), abs(b))


def cmd_verify(cfg: RunConfig) -> tuple[dict, int]:
    kernel, settings = validate(cfg)
    c_now = _disc.dyadic_c_matrix(kernel, cfg.depth, cfg.T)
    c_prev = _disc.dyadic_c_matrix(kernel, cfg.depth - 1, cfg.T)
    mc = _disc.mc_signature_estimate(kernel, cfg.d, cfg.mc_depth, cfg.N, cfg.T, cfg.paths,
                                     cfg.seed, workers=cfg.workers)
    cache: dict = {}
    theo: dict = {}
    disc: dict = {}
    rows = []
    passed = True
    for w in even_words(cfg.d, cfg.N):
        if not w:
            continue
        pat = letter_pattern(w)
        if pat not in theo:
            theo[pat] = expected_word_coefficient(pat, kernel, cfg.T, settings, cache)
            now = _disc.discrete_expected_word(pat, c_now)
            prev = _disc.discrete_expected_word(pat, c_prev)
            disc[pat] = (now, prev)
        t = theo[pat]
        now, prev = disc[pat]
        d_err = abs(now - prev)
        m_val, m_err = mc.value(w), mc.error(w)
        flags = {
            "theorem_discrete": agree(t.value, t.stderr, now, d_err),
            "theorem_mc": agree(t.value, t.stderr, m_val, m_err),
            "discrete_mc": agree(now, d_err, m_val, m_err),
        }
        passed &= all(flags.values())
        rows.append({
            "word": _word_str(w),
            "theorem": {"value": t.value, "stderr": t.stderr},
            "discrete": {"value": now, "previous_depth_value": prev, "error": d_err},
            "mc": {"value": m_val, "stderr": m_err},
            "flags": flags,
        })
    meta = _meta(cfg, kernel, settings)
    meta.update(depth=cfg.depth, mc_depth=cfg.mc_depth, paths=cfg.paths)
    return {"meta": meta, "terms": rows, "passed": passed}, 0 if passed else 1


def cmd_hsweep(cfg: RunConfig) -> tuple[str, int]:
    _, settings = validate(cfg)
    n = cfg.n
    limit = 1.0 / (2**n * math.factorial(n))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["H", "canonical_In", "abs_gap", "bound", "max_noncanonical",
                     "max_noncanonical_stderr", "within_bound"])
    for h in cfg.grid:
        canon = canonical_In(n, h, settings)
        bound = cross_pairing_bound(h)
        others = noncanonical_terms(n, h, settings)
        if others:
            _, worst = max(others, key=lambda pr: pr[1].value)
            ok = all(r.value <= bound + 3 * r.stderr for _, r in others)
            mx, mx_se = worst.value, worst.stderr
        else:
            ok, mx, mx_se = True, 0.0, 0.0
        writer.writerow([repr(h), repr(canon.value), repr(abs(canon.value - limit)), repr(bound),
                         repr(mx), repr(mx_se), "true" if ok else "false"])
    return buf.getvalue(), 0


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _fail(kind: str, message: str, code: int) -> int:
    line = " ".join(str(message).split())
    print(f"expsig: error: {kind}: {line}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        if any(a in ("-h", "--help") for a in argv):
            build_parser().parse_args(argv)
        cfg = load_config(argv)
        if cfg.subcommand == "compute":
            obj, code = cmd_compute(cfg)
            _emit(dumps(obj), cfg.out)
        elif cfg.subcommand == "verify":
            obj, code = cmd_verify(cfg)
            _emit(dumps(obj), cfg.out)
            if code:
                bad = [r["word"] for r in obj["terms"] if not all(r["flags"].values())]
                return _fail("verify", f"oracles disagree on words {';'.join(bad)}", code)
        else:
            text, code = cmd_hsweep(cfg)
            _emit(text, cfg.out)
        return code
    except ConfigError as exc:
        return _fail("config", exc, 2)
    except ResourceError as exc:
        return _fail("resource", exc, 3)
    except NumericError as exc:
        return _fail("numeric", exc, 1)
    except ValueError as exc:
        return _fail("config", exc, 2)
    except Exception as exc:  # noqa: BLE001 - keep the one-line contract
        return _fail("internal", f"{type(exc).__name__}: {exc}", 1)


if __name__ == "__main__":
    sys.exit(main())
