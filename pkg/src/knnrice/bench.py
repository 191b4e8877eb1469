"""Monte Carlo MSE campaigns for the kNN data-generation estimator."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._rng import SeedLike, derive_seed
from .channel import ShapingParams, sample
from .optimize import FitConfig, FitError, fit
from .likelihood import EmptyOverlapError


class CampaignError(RuntimeError):
    """Too many trials failed for the campaign to be meaningful."""


@dataclass(frozen=True)
class MseStats:
    mse: float
    variance: float
    bias: float


def mse(estimates: Sequence[float], truth: float) -> MseStats:
    """Population variance of the estimates plus squared bias of their mean."""
    est = np.asarray(estimates, dtype=float)
    if est.size < 2:
        raise ValueError("need at least 2 estimates")
    mean = float(np.mean(est))
    variance = float(np.mean((est - mean) ** 2))
    bias = mean - truth
    return MseStats(mse=variance + bias * bias, variance=variance, bias=bias)


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    r_hat: float
    sigma_z2_hat: float
    k_hat: int
    llf: float
    seconds: float


@dataclass(frozen=True)
class MseReport:
    truth: ShapingParams
    trials: int
    r: MseStats
    sigma_z2: MseStats
    method: str
    M: int
    L: int
    n_llf: int
    seconds_total: float
    failures: int
    records: tuple[TrialRecord, ...]


def trial_seeds(master_seed: SeedLike, trial: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """Observation seed and fit seed for one trial."""
    return derive_seed(master_seed, trial, 0), derive_seed(master_seed, trial, 1)


def run_trial(truth: ShapingParams, m: int, cfg: FitConfig, trial: int, master_seed: SeedLike) -> Optional[TrialRecord]:
    obs_seed, fit_seed = trial_seeds(master_seed, trial)
    observed = sample(truth, m, obs_seed)
    trial_cfg = replace(cfg, seed=fit_seed, llf=replace(cfg.llf, seed=derive_seed(fit_seed, 0)))
    start = time.perf_counter()
    try:
        result = fit(observed, trial_cfg)
    except (FitError, EmptyOverlapError):
        return None
    return TrialRecord(
        trial=trial,
        r_hat=result.params.r,
        sigma_z2_hat=result.params.sigma_z2,
        k_hat=result.k,
        llf=result.objective,
        seconds=time.perf_counter() - start,
    )


def campaign(
    truth: ShapingParams,
    m: int,
    cfg: FitConfig,
    trials: int,
    master_seed: SeedLike = 0,
    workers: Optional[int] = None,
    trial_ids: Optional[Sequence[int]] = None,
) -> MseReport:
    """Fit ``trials`` independent observation sets drawn at ``truth``.

    Trial ``t`` draws its observations from ``derive_seed(master_seed, t, 0)``
    and searches with ``derive_seed(master_seed, t, 1)``. ``trial_ids``
    overrides the trial indices (repeating an index repeats the trial
    exactly). Failed fits are dropped and counted; more than 20% failures
    raise :class:`CampaignError`.
    """
    ids = list(range(trials)) if trial_ids is None else [int(t) for t in trial_ids]
    if len(ids) < 2:
        raise ValueError("a campaign needs at least 2 trials")
    start = time.perf_counter()

    def work(t):
        return run_trial(truth, m, cfg, t, master_seed)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(work, ids))
    else:
        outcomes = [work(t) for t in ids]
    records = tuple(rec for rec in outcomes if rec is not None)
    failures = len(ids) - len(records)
    if failures > 0.2 * len(ids):
        raise CampaignError(f"{failures} of {len(ids)} trials failed")
    if len(records) < 2:
        raise CampaignError("fewer than 2 successful trials")
    return MseReport(
        truth=truth,
        trials=len(records),
        r=mse([rec.r_hat for rec in records], truth.r),
        sigma_z2=mse([rec.sigma_z2_hat for rec in records], truth.sigma_z2),
        method=cfg.method,
        M=m,
        L=cfg.llf.L,
        n_llf=cfg.llf.n_llf,
        seconds_total=time.perf_counter() - start,
        failures=failures,
        records=records,
    )


def write_campaign_csv(report: MseReport, path, provenance: Optional[str] = None) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        fh.write("trial,r_hat,sigma_z2_hat,k_hat,llf,seconds\n")
        for rec in report.records:
            fh.write(
                f"{rec.trial},{rec.r_hat:.17g},{rec.sigma_z2_hat:.17g},{rec.k_hat},{rec.llf:.17g},{rec.seconds:.6f}\n"
            )


SUMMARY_HEADER = (
    "r,sigma_z2,method,M,L,n_llf,trials,failures,"
    "mse_r,var_r,bias_r,mse_sigma_z2,var_sigma_z2,bias_sigma_z2,seconds"
)


def summary_row(report: MseReport) -> str:
    t, a, b = report.truth, report.r, report.sigma_z2
    return ",".join(
        [
            f"{t.r:.17g}",
            f"{t.sigma_z2:.17g}",
            report.method,
            str(report.M),
            str(report.L),
            str(report.n_llf),
            str(report.trials),
            str(report.failures),
            *(f"{v:.17g}" for v in (a.mse, a.variance, a.bias, b.mse, b.variance, b.bias)),
            f"{report.seconds_total:.3f}",
        ]
    )


def write_summary_csv(reports: Sequence[MseReport], path, provenance: Optional[str] = None) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        fh.write(SUMMARY_HEADER + "\n")
        for rep in reports:
            fh.write(summary_row(rep) + "\n")


def mse_identity_holds(report: MseReport, rel: float = 1e-12) -> bool:
    return all(
        math.isclose(s.variance + s.bias**2, s.mse, rel_tol=rel, abs_tol=1e-300)
        for s in (report.r, report.sigma_z2)
    )
