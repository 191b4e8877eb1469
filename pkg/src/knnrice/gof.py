"""Kolmogorov-Smirnov checks of the kNN approximation and the optimal-k sweep."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

import numpy as np

from . import knn
from ._rng import SeedLike, derive_seed
from .channel import SampleSet, ShapingParams, sample


@dataclass(frozen=True)
class KsResult:
    statistic: float
    n: int
    alpha: float = 0.05
    critical: float = float("nan")

    @property
    def passed(self) -> bool:
        return self.statistic < self.critical


@dataclass(frozen=True)
class KSweepRow:
    k: int
    mean_T: float
    runs: int


def _sorted_values(samples) -> np.ndarray:
    values = samples.values if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
    values = np.sort(np.ravel(values))
    if values.size == 0:
        raise ValueError("KS statistic needs at least one sample")
    return values


def ks_distance(cdf: Union[Callable, np.ndarray], samples) -> float:
    """Two-sided KS distance between a continuous CDF and the sample ECDF.

    ``cdf`` is either a vectorised callable or the CDF already evaluated at
    the *sorted* samples. The supremum of ``|F - F_n|`` over the real line is
    reached at a sample point, from the left or the right, so checking
    ``i/n`` and ``(i-1)/n`` there is exact.
    """
    x = _sorted_values(samples)
    f = np.asarray(cdf(x) if callable(cdf) else cdf, dtype=float)
    if f.shape != x.shape:
        raise ValueError("CDF values must match the number of samples")
    n = x.size
    i = np.arange(1, n + 1)
    upper = np.max(i / n - f)
    lower = np.max(f - (i - 1) / n)
    return float(max(upper, lower))


def ks_statistic(est: knn.DensityEstimate, samples) -> KsResult:
    """KS distance between the renormalised kNN CDF of ``est`` and ``samples``."""
    stat = ks_distance(est.cdf_at, samples)
    n = _sorted_values(samples).size
    return KsResult(statistic=stat, n=n)


def ks_critical(alpha: float, n: int) -> float:
    """Asymptotic two-sided KS critical value ``sqrt(-ln(alpha/2) / 2) / sqrt(n)``.

    For ``alpha = 0.05`` the coefficient is 1.3581.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return math.sqrt(-0.5 * math.log(alpha / 2)) / math.sqrt(n)


def ks_test(est: knn.DensityEstimate, samples, alpha: float = 0.05) -> KsResult:
    res = ks_statistic(est, samples)
    return KsResult(statistic=res.statistic, n=res.n, alpha=alpha, critical=ks_critical(alpha, res.n))


def _sweep_cell(params: ShapingParams, m: int, k: int, seed: np.random.SeedSequence) -> float:
    data = np.sort(sample(params, m, seed).values)
    est = knn.estimate(data, k, presorted=True)
    return ks_distance(est.cdf_at, data)


def k_sweep(
    params: ShapingParams,
    m: int,
    k_range: Iterable[int],
    runs: int,
    seed: SeedLike = 0,
    workers: Optional[int] = None,
) -> tuple[list[KSweepRow], int]:
    """Average KS statistic of the self-fitted kNN estimate for each ``k``.

    Every ``(k, run)`` cell draws ``m`` fresh samples from the stream
    ``derive_seed(seed, k, run)``, fits the estimate with that ``k`` and
    measures it against the same samples.

    Returns
    -------
    rows : list of KSweepRow
        One row per ``k``, in the order of ``k_range``.
    best_k : int
        The ``k`` with the smallest mean statistic (first on ties).
    """
    ks = [int(k) for k in k_range]
    if not ks:
        raise ValueError("k_range is empty")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    bad = [k for k in ks if not 2 <= k <= m - 1]
    if bad:
        raise ValueError(f"k values {bad} outside [2, {m - 1}]")
    cells = [(k, run) for k in ks for run in range(runs)]

    def work(cell):
        k, run = cell
        return _sweep_cell(params, m, k, derive_seed(seed, k, run))

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            stats = list(pool.map(work, cells))
    else:
        stats = [work(cell) for cell in cells]
    table = np.asarray(stats).reshape(len(ks), runs)
    rows = [KSweepRow(k=k, mean_T=float(np.mean(table[i])), runs=runs) for i, k in enumerate(ks)]
    best = min(rows, key=lambda row: row.mean_T).k
    return rows, best


def write_sweep_csv(rows: list[KSweepRow], best_k: int, path, provenance: Optional[str] = None) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        fh.write("k,mean_T,runs\n")
        for row in rows:
            fh.write(f"{row.k},{row.mean_T:.17g},{row.runs}\n")
        fh.write(f"# argmin_k={best_k}\n")
