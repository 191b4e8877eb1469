"""Command-line front end: ``knnrice <subcommand> [flags]``.

Every file written starts with a ``#`` provenance line holding the full
invocation, so a CSV can be regenerated from its own header.
"""

from __future__ import annotations

import argparse
import shlex
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import bench, gof, knn, likelihood, optimize
from ._rng import derive_seed
from .channel import InvalidParameterError, ShapingParams, read_samples_csv, sample, write_samples_csv

SUBCOMMANDS = ("simulate", "density", "ks-sweep", "llf-grid", "fit", "bench")


@dataclass(frozen=True)
class ScaleDefaults:
    samples: int
    generated: int
    trials: int
    runs: int


DESK = ScaleDefaults(samples=10_000, generated=100_000, trials=10, runs=20)
PAPER = ScaleDefaults(samples=10_000, generated=1_000_000, trials=35, runs=100)


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _nonneg_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not np.isfinite(value) or value < 0:
        raise argparse.ArgumentTypeError(f"expected a finite number >= 0, got {text}")
    return value


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _range(text: str) -> tuple[float, float, float]:
    """``start:stop:step`` (inclusive stop)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected start:stop:step")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}")
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError(f"bad range {text!r}")
    return start, stop, step


def _grid(spec: tuple[float, float, float]) -> np.ndarray:
    start, stop, step = spec
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(count), 10)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--r", type=_nonneg_float, default=5.0, help="coherence parameter r")
    common.add_argument("--sigma-z2", type=_nonneg_float, default=0.25, help="lognormal variance sigma_z^2")
    common.add_argument("--k", type=_positive_int, default=None, help="kNN neighbour count")
    common.add_argument("--samples", "-M", type=_positive_int, default=None, help="channel samples M")
    common.add_argument("--generated", "-L", type=_positive_int, default=None, help="generated samples L")
    common.add_argument("--n-llf", type=_positive_int, default=None, help="LLF evaluations averaged (N_LLF)")
    common.add_argument("--trials", type=_positive_int, default=None, help="Monte Carlo trials")
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--method", choices=("ga", "gd"), default="ga", help="search method")
    common.add_argument("--out", default=None, help="output CSV/text path")
    common.add_argument("--paper-scale", action="store_true", help="full-size defaults (M, L, trials, runs)")
    common.add_argument("--threads", type=_positive_int, default=1, help="cap on worker threads")

    parser = argparse.ArgumentParser(prog="knnrice", description="kNN estimation for Lognormal-Rician channels")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sub.add_parser("simulate", parents=[common], help="draw channel samples to CSV")

    p = sub.add_parser("density", parents=[common], help="kNN density of a sample CSV or fresh draw")
    p.add_argument("--input", default=None, help="sample CSV (default: simulate at --r/--sigma-z2)")

    p = sub.add_parser("ks-sweep", parents=[common], help="mean KS statistic per k")
    p.add_argument("--k-min", type=_positive_int, default=2)
    p.add_argument("--k-max", type=_positive_int, default=30)
    p.add_argument("--runs", type=_positive_int, default=None)

    p = sub.add_parser("llf-grid", parents=[common], help="averaged LLF on an (r, sigma_z2) grid")
    p.add_argument("--r-grid", type=_range, default=(4.0, 6.0, 0.1), help="start:stop:step")
    p.add_argument("--sigma-z2-grid", type=_range, default=(0.2, 0.3, 0.01), help="start:stop:step")
    p.add_argument("--input", default=None)
    p.add_argument("--fresh-draws", action="store_true", help="independent synthetic streams per grid cell")

    p = sub.add_parser("fit", parents=[common], help="estimate (r, sigma_z2, k) from samples")
    p.add_argument("--input", default=None)
    p.add_argument("--trace", default=None, help="fit trace CSV path")
    p.add_argument("--search-k", action="store_true", help="GD: search k near its start each step")
    p.add_argument("--generations", type=_positive_int, default=None)
    p.add_argument("--population", type=_positive_int, default=None)

    p = sub.add_parser("bench", parents=[common], help="MSE campaign over truth values")
    p.add_argument("--r-values", type=_float_list, default=None, help="comma list of r (default --r)")
    p.add_argument("--sigma-z2-values", type=_float_list, default=None, help="comma list (default --sigma-z2)")
    p.add_argument("--summary", default=None, help="summary CSV path")
    p.add_argument("--generations", type=_positive_int, default=None)
    p.add_argument("--population", type=_positive_int, default=None)
    return parser


def _defaults(args) -> ScaleDefaults:
    return PAPER if args.paper_scale else DESK


def _params(args) -> ShapingParams:
    try:
        return ShapingParams(args.r, args.sigma_z2)
    except InvalidParameterError as exc:
        raise UsageError(str(exc))


def _observed(args, params: ShapingParams, m: int):
    if getattr(args, "input", None):
        return read_samples_csv(args.input)
    return sample(params, m, derive_seed(args.seed, 0))


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise UsageError(message)


def _llf_config(args) -> likelihood.LlfConfig:
    scale = _defaults(args)
    big_l = args.generated or scale.generated
    k = args.k or 15
    n_llf = args.n_llf or (1 if args.method == "ga" else 50)
    _require(big_l >= k + 1, f"--generated must exceed --k ({big_l} <= {k})")
    return likelihood.LlfConfig(L=big_l, k=k, n_llf=n_llf, seed=derive_seed(args.seed, 1))


def _fit_config(args) -> optimize.FitConfig:
    extra = {}
    if getattr(args, "generations", None):
        extra["ga_generations"] = args.generations
    if getattr(args, "population", None):
        _require(args.population >= 2, "--population must be >= 2")
        extra["ga_population"] = args.population
    return optimize.FitConfig(
        method=args.method,
        llf=_llf_config(args),
        seed=derive_seed(args.seed, 2),
        search_k=getattr(args, "search_k", False),
        **extra,
    )


def _out(args, default: str) -> str:
    return args.out or default


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    provenance = "knnrice " + " ".join(shlex.quote(a) for a in argv)
    try:
        return _dispatch(args, provenance)
    except UsageError as exc:
        print(f"knnrice: usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"knnrice: error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args, provenance: str) -> int:
    scale = _defaults(args)
    params = _params(args)
    m = args.samples or scale.samples
    _require(m >= 2, f"--samples must be >= 2, got {m}")

    if args.subcommand == "simulate":
        # same stream as the observations drawn by the other subcommands
        data = sample(params, m, derive_seed(args.seed, 0))
        path = _out(args, "samples.csv")
        write_samples_csv(data, path, provenance)
        print(f"wrote {m} samples (r={params.r}, sigma_z2={params.sigma_z2}) to {path}")
        return 0

    if args.subcommand == "density":
        data = _observed(args, params, m)
        k = args.k or 15
        _require(k <= len(data) - 1, f"--k must be < number of samples ({len(data)})")
        est = knn.estimate(data, k)
        path = _out(args, "density.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# {provenance}\n")
        _append_density(est, path)
        res = gof.ks_test(est, data)
        print(f"k={k} c={est.c:.6g} KS={res.statistic:.5f} critical={res.critical:.5f} -> {path}")
        return 0

    if args.subcommand == "ks-sweep":
        m = args.samples or 1000
        runs = args.runs or scale.runs
        _require(2 <= args.k_min <= args.k_max <= m - 1, "need 2 <= --k-min <= --k-max <= samples - 1")
        rows, best = gof.k_sweep(params, m, range(args.k_min, args.k_max + 1), runs, args.seed, args.threads)
        path = _out(args, "ks_sweep.csv")
        gof.write_sweep_csv(rows, best, path, provenance)
        crit = gof.ks_critical(0.05, m)
        print(f"argmin_k={best} mean_T={min(r.mean_T for r in rows):.5f} critical={crit:.5f} -> {path}")
        return 0

    if args.subcommand == "llf-grid":
        observed = _observed(args, params, m)
        cfg = _llf_config(args)
        if args.n_llf is None:
            cfg = likelihood.LlfConfig(L=cfg.L, k=cfg.k, n_llf=20, seed=cfg.seed)
        r_vals, s_vals = _grid(args.r_grid), _grid(args.sigma_z2_grid)
        _require(np.all(s_vals > 0), "sigma_z2 grid must be > 0")
        grid = likelihood.llf_grid(observed, r_vals, s_vals, cfg, args.threads, common_draws=not args.fresh_draws)
        path = _out(args, "llf_grid.csv")
        likelihood.write_grid_csv(grid, r_vals, s_vals, cfg.k, path, provenance)
        r_star, s_star = likelihood.grid_argmax(grid, r_vals, s_vals)
        print(f"argmax r={r_star:g} sigma_z2={s_star:g} llf={np.max(grid):.6f} -> {path}")
        return 0

    if args.subcommand == "fit":
        observed = _observed(args, params, m)
        cfg = _fit_config(args)
        result = optimize.fit(observed, cfg)
        path = _out(args, "fit.txt")
        optimize.write_result_text(result, path)
        if args.trace:
            optimize.write_trace_csv(result, args.trace, provenance)
        print(
            f"r={result.params.r:.4f} sigma_z2={result.params.sigma_z2:.5f} k={result.k} "
            f"llf={result.objective:.6f} evals={result.evaluations} ({result.wall_time:.1f}s) -> {path}"
        )
        return 0

    if args.subcommand == "bench":
        trials = args.trials or scale.trials
        _require(trials >= 2, "--trials must be >= 2")
        cfg = _fit_config(args)
        r_values = args.r_values or [params.r]
        s_values = args.sigma_z2_values or [params.sigma_z2]
        out = _out(args, "campaign.csv")
        reports = []
        for i, (r, s2) in enumerate((r, s2) for r in r_values for s2 in s_values):
            truth = ShapingParams(r, s2)
            report = bench.campaign(truth, m, cfg, trials, derive_seed(args.seed, 3, i), args.threads)
            if not bench.mse_identity_holds(report):
                raise ArithmeticError("variance + bias^2 != mse in campaign report")
            reports.append(report)
            path = out if len(r_values) * len(s_values) == 1 else _suffix(out, i)
            bench.write_campaign_csv(report, path, provenance)
            print(
                f"r={r:g} sigma_z2={s2:g}: MSE(r)={report.r.mse:.4g} MSE(sigma_z2)={report.sigma_z2.mse:.4g} "
                f"failures={report.failures} -> {path}"
            )
        bench.write_summary_csv(reports, args.summary or _suffix(out, "summary"), provenance)
        return 0

    raise UsageError(f"unknown subcommand {args.subcommand}")


def _suffix(path: str, tag) -> str:
    stem, dot, ext = path.rpartition(".")
    if not dot:
        return f"{path}_{tag}"
    return f"{stem}_{tag}.{ext}"


def _append_density(est: knn.DensityEstimate, path: str) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("support,raw_density,normalized_density\n")
        for s, d in zip(est.support, est.densities):
            fh.write(f"{s:.17g},{d:.17g},{d * est.c:.17g}\n")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
