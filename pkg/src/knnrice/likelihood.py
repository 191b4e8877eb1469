"""Data-generation approximation of the Lognormal-Rician log-likelihood.

The exact density needs a Bessel-function integral per observation. Instead,
``L`` synthetic intensities are drawn at the candidate parameters, a kNN
density is fitted to them, and the observed samples are scored under its
linear interpolant. Observations outside the synthetic support carry no
density information and are dropped from the mean.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import knn
from ._rng import SeedLike, derive_seed
from .channel import SampleSet, ShapingParams, sample


class EmptyOverlapError(ValueError):
    """No observed sample falls inside the synthetic support."""


@dataclass(frozen=True)
class LlfConfig:
    """Settings for one averaged log-likelihood evaluation.

    Attributes
    ----------
    L : int
        Synthetic samples drawn per evaluation.
    k : int
        Neighbour count of the kNN density.
    n_llf : int
        Independent evaluations averaged together.
    seed : int or SeedSequence
        Master seed; run ``i`` uses ``derive_seed(seed, i)``.
    literal_c : bool
        Add the normalisation factor itself instead of its logarithm. The
        mean of ``log(c * p)`` is ``mean(log p) + log(c)``; the literal form
        exists only to reproduce that variant of the formula.
    """

    L: int = 100_000
    k: int = 15
    n_llf: int = 1
    seed: SeedLike = 0
    literal_c: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.L < self.k + 1:
            raise ValueError(f"L={self.L} must exceed k={self.k}")
        if self.n_llf < 1:
            raise ValueError(f"n_llf must be >= 1, got {self.n_llf}")


@dataclass(frozen=True)
class LlfValue:
    value: float
    retained: int
    total: int


def _observed_sorted(observed) -> np.ndarray:
    if isinstance(observed, SampleSet):
        return observed.sorted()
    values = np.asarray(observed, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("observed samples must be a non-empty 1-D array")
    return np.sort(values)


def llf_once(observed, candidate: ShapingParams, cfg: LlfConfig, draw: SeedLike) -> LlfValue:
    """One data-generation LLF evaluation with synthetic stream ``draw``."""
    obs = _observed_sorted(observed)
    synthetic = np.sort(sample(candidate, cfg.L, draw).values)
    est = knn.estimate(synthetic, cfg.k, presorted=True)
    lo = np.searchsorted(obs, est.support[0], side="left")
    hi = np.searchsorted(obs, est.support[-1], side="right")
    kept = obs[lo:hi]
    if kept.size == 0:
        raise EmptyOverlapError(
            f"no observed sample inside synthetic support [{est.support[0]:.4g}, {est.support[-1]:.4g}]"
        )
    raw = np.interp(kept, est.support, est.densities)
    value = float(np.mean(np.log(raw)))
    value += est.c if cfg.literal_c else math.log(est.c)
    return LlfValue(value=value, retained=int(kept.size), total=int(obs.size))


def llf_mean(observed, candidate: ShapingParams, cfg: LlfConfig, workers: Optional[int] = None) -> LlfValue:
    """Average of ``cfg.n_llf`` independent :func:`llf_once` runs.

    Returns ``-inf`` if any run has no overlap with the observations.
    """
    obs = _observed_sorted(observed)
    seeds = [derive_seed(cfg.seed, i) for i in range(cfg.n_llf)]

    def run(s):
        try:
            return llf_once(obs, candidate, cfg, s)
        except EmptyOverlapError:
            return None

    if workers and workers > 1 and cfg.n_llf > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]
    if any(res is None for res in results):
        return LlfValue(value=-math.inf, retained=0, total=int(obs.size))
    # fixed-order sum over run index
    total = math.fsum(res.value for res in results)
    return LlfValue(
        value=total / cfg.n_llf,
        retained=min(res.retained for res in results),
        total=int(obs.size),
    )


def llf_grid(
    observed,
    r_values: Sequence[float],
    sigma_z2_values: Sequence[float],
    cfg: LlfConfig,
    workers: Optional[int] = None,
    common_draws: bool = True,
) -> np.ndarray:
    """Averaged LLF on a parameter grid, shape ``(len(r_values), len(sigma_z2_values))``.

    With ``common_draws`` every cell reuses ``cfg.seed``, so all candidates
    share the same underlying random streams and differences between cells
    reflect the parameters rather than sampling noise. Otherwise cell ``j``
    (row-major) averages over its own streams ``derive_seed(cfg.seed, j, i)``.
    """
    obs = _observed_sorted(observed)
    cells = [(r, s2) for r in r_values for s2 in sigma_z2_values]

    def work(j):
        cell_cfg = cfg if common_draws else replace(cfg, seed=derive_seed(cfg.seed, j))
        return llf_mean(obs, ShapingParams(*cells[j]), cell_cfg).value

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(work, range(len(cells))))
    else:
        values = [work(j) for j in range(len(cells))]
    return np.asarray(values).reshape(len(r_values), len(sigma_z2_values))


def grid_argmax(grid: np.ndarray, r_values, sigma_z2_values) -> tuple[float, float]:
    i, j = np.unravel_index(np.argmax(grid), grid.shape)
    return float(r_values[i]), float(sigma_z2_values[j])


def write_grid_csv(grid: np.ndarray, r_values, sigma_z2_values, k: int, path, provenance: Optional[str] = None) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        fh.write("r,sigma_z2,k,llf\n")
        for i, r in enumerate(r_values):
            for j, s2 in enumerate(sigma_z2_values):
                fh.write(f"{r:.17g},{s2:.17g},{k},{grid[i, j]:.17g}\n")


def with_seed(cfg: LlfConfig, seed: SeedLike) -> LlfConfig:
    return replace(cfg, seed=seed)
