"""Maximise the averaged approximate LLF over ``(r, sigma_z2, k)``.

Two searches are provided: a real-coded genetic algorithm with tournament
selection, and projected finite-difference ascent started from moment
estimates. Both take any objective ``f(params, k) -> float``; by default that
is :func:`knnrice.likelihood.llf_mean` on the observed samples.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import optimize as sopt
from scipy import special

from ._rng import SeedLike, as_generator, derive_seed, describe
from .channel import SampleSet, ShapingParams
from .likelihood import LlfConfig, llf_mean

Objective = Callable[[ShapingParams, int], float]


class FitError(RuntimeError):
    """The search never found a finite objective value."""


@dataclass(frozen=True)
class Bounds:
    r: tuple[float, float] = (0.0, 30.0)
    sigma_z2: tuple[float, float] = (1e-3, 2.0)
    k: tuple[int, int] = (2, 64)

    def __post_init__(self) -> None:
        (rl, rh), (sl, sh), (kl, kh) = self.r, self.sigma_z2, self.k
        if not (0 <= rl <= rh and 0 < sl <= sh and 1 <= kl <= kh):
            raise ValueError(f"invalid bounds {self}")
        if int(kl) != kl or int(kh) != kh:
            raise ValueError("k bounds must be integers")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.r[0], self.sigma_z2[0], self.k[0]], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.r[1], self.sigma_z2[1], self.k[1]], dtype=float)

    def clip(self, x: np.ndarray) -> np.ndarray:
        out = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        out[..., 2] = np.clip(np.rint(out[..., 2]), self.k[0], self.k[1])
        return out

    @classmethod
    def point(cls, r: float, sigma_z2: float, k: int) -> "Bounds":
        return cls(r=(r, r), sigma_z2=(sigma_z2, sigma_z2), k=(k, k))


@dataclass(frozen=True)
class FitConfig:
    """Search settings.

    GA defaults: population 100, tournament size 4, uniform crossover with
    probability 0.8, per-gene Gaussian mutation with probability 0.1 and
    scale 10% of the box width shrinking linearly to zero, 2 elites.

    GD defaults: central differences with offsets 0.05 (r) and 0.005
    (sigma_z2); a first move of ``gd_step``, then quasi-Newton moves of at
    most ``gd_max_step`` per coordinate, halved until they improve, stopping
    once the step is below ``gd_tol``. ``k`` stays at ``llf.k`` unless ``search_k`` is set, in which
    case ``k +- k_radius`` is tried at every iteration.

    ``crn`` (common random numbers) evaluates every candidate with the same
    synthetic seed ``llf.seed``, which makes the objective a deterministic
    function of the candidate. With ``crn=False`` evaluation ``i`` uses
    ``derive_seed(llf.seed, i)``.
    """

    method: str = "ga"
    bounds: Bounds = field(default_factory=Bounds)
    llf: LlfConfig = field(default_factory=LlfConfig)
    seed: SeedLike = 0
    crn: bool = True
    ga_population: int = 100
    ga_generations: int = 50
    ga_tournament: int = 4
    ga_crossover: float = 0.8
    ga_mutation: float = 0.1
    ga_mutation_scale: float = 0.1
    ga_elite: int = 2
    gd_fd_eps: tuple[float, float] = (0.05, 0.005)
    gd_step: tuple[float, float] = (0.5, 0.05)
    gd_max_step: tuple[float, float] = (2.0, 0.2)
    gd_max_iters: int = 50
    gd_tol: tuple[float, float] = (1e-3, 1e-4)
    search_k: bool = False
    k_radius: int = 2

    def __post_init__(self) -> None:
        if self.method not in ("ga", "gd"):
            raise ValueError(f"method must be 'ga' or 'gd', got {self.method!r}")
        if self.ga_population < 2:
            raise ValueError("ga_population must be >= 2")
        if not 0 <= self.ga_elite < self.ga_population:
            raise ValueError("ga_elite must lie in [0, population)")
        if self.ga_tournament < 1 or self.ga_generations < 0 or self.gd_max_iters < 0:
            raise ValueError("invalid iteration settings")


@dataclass(frozen=True)
class TraceEntry:
    index: int
    r: float
    sigma_z2: float
    k: int
    llf: float
    seed: SeedLike = None


@dataclass(frozen=True)
class FitResult:
    params: ShapingParams
    k: int
    objective: float
    trace: tuple[TraceEntry, ...]
    evaluations: int
    wall_time: float
    method: str
    seed: SeedLike = None


def _log_mean_rician(r: float) -> float:
    # E[ln y] for the unit-mean Rician intensity
    if r == 0:
        return -np.euler_gamma
    return math.log(r / (1.0 + r)) + float(special.exp1(r))


def _moment_gap(r: float) -> float:
    # 2 E[ln I] + ln E[I^2] as a function of r alone (sigma_z2 cancels)
    g = (1.0 + 2.0 * r) / (1.0 + r) ** 2
    return 2.0 * _log_mean_rician(r) + math.log1p(g)


def initial_estimates(observed, bounds: Bounds = Bounds()) -> ShapingParams:
    """Moment-based starting point.

    ``sigma_z2`` is ``-2 * mean(ln I)``, clamped to the bounds. ``r`` comes
    from the second moment ``E[I^2] = exp(sigma_z2) (1 + (1 + 2r)/(1 + r)^2)``
    with ``sigma_z2`` eliminated through ``E[ln I] = -sigma_z2/2 + E[ln y](r)``,
    so ``2 mean(ln I) + ln mean(I^2)`` depends on ``r`` only and increases
    monotonically from ``ln 2 - 2*gamma`` at ``r = 0`` to 0 as ``r -> inf``.
    Targets outside that range clamp to the corresponding ``r`` bound.
    """
    values = observed.values if isinstance(observed, SampleSet) else np.asarray(observed, dtype=float)
    if values.size == 0:
        raise ValueError("no samples")
    if np.any(~(values > 0)):
        raise ValueError("samples must be strictly positive")
    mean_log = float(np.mean(np.log(values)))
    s2 = float(np.clip(-2.0 * mean_log, *bounds.sigma_z2))
    target = 2.0 * mean_log + math.log(float(np.mean(values**2)))
    r_lo, r_hi = bounds.r
    if target <= _moment_gap(r_lo):
        r = r_lo
    elif target >= _moment_gap(r_hi):
        r = r_hi
    else:
        r = sopt.brentq(lambda x: _moment_gap(x) - target, r_lo, r_hi, xtol=1e-10)
    return ShapingParams(r, s2)


class _Evaluator:
    """Counts, caches and records objective calls."""

    def __init__(self, objective: Objective, crn: bool, master: SeedLike, seeded: bool):
        self.objective = objective
        self.crn = crn
        self.master = master
        self.seeded = seeded
        self.trace: list[TraceEntry] = []
        self.cache: dict[tuple, float] = {}

    def seed_for(self, index: int) -> SeedLike:
        return self.master if self.crn else derive_seed(self.master, index)

    def __call__(self, x) -> float:
        r, s2, k = float(x[0]), float(x[1]), int(round(x[2]))
        key = (r, s2, k)
        if self.crn and key in self.cache:
            return self.cache[key]
        index = len(self.trace)
        seed = self.seed_for(index)
        params = ShapingParams(r, s2)
        value = self.objective(params, k, seed) if self.seeded else self.objective(params, k)
        value = float(value)
        if math.isnan(value):
            value = -math.inf
        self.trace.append(TraceEntry(index, r, s2, k, value, seed if self.seeded else None))
        self.cache[key] = value
        return value

    def best(self) -> TraceEntry:
        return max(self.trace, key=lambda e: e.llf)


def _tournament(rng: np.random.Generator, fitness: np.ndarray, size: int) -> int:
    picks = rng.integers(0, fitness.size, size)
    return int(picks[np.argmax(fitness[picks])])


def genetic_search(evaluate: Callable, bounds: Bounds, x0: Optional[np.ndarray], cfg: FitConfig) -> None:
    rng = as_generator(derive_seed(cfg.seed, 0))
    lo, hi = bounds.lower, bounds.upper
    width = hi - lo
    pop_size = cfg.ga_population
    pop = lo + rng.random((pop_size, 3)) * width
    pop[:, 2] = rng.integers(bounds.k[0], bounds.k[1] + 1, pop_size)
    if x0 is not None:
        pop[0] = x0
    pop = bounds.clip(pop)
    fitness = np.array([evaluate(ind) for ind in pop])
    generations = cfg.ga_generations
    for gen in range(generations):
        order = np.argsort(-fitness, kind="stable")
        elites = pop[order[: cfg.ga_elite]]
        scale = cfg.ga_mutation_scale * width * (1.0 - gen / generations)
        children = []
        while len(children) < pop_size - cfg.ga_elite:
            a = pop[_tournament(rng, fitness, cfg.ga_tournament)]
            b = pop[_tournament(rng, fitness, cfg.ga_tournament)]
            if rng.random() < cfg.ga_crossover:
                child = np.where(rng.random(3) < 0.5, a, b)
            else:
                child = a.copy()
            mutate = rng.random(3) < cfg.ga_mutation
            child = child + mutate * rng.standard_normal(3) * scale
            children.append(child)
        pop = bounds.clip(np.vstack([elites, np.asarray(children).reshape(-1, 3)]))
        fitness = np.array([evaluate(ind) for ind in pop])


def _k_candidates(k: int, cfg: FitConfig, bounds: Bounds) -> list[int]:
    return [kk for kk in range(k - cfg.k_radius, k + cfg.k_radius + 1) if bounds.k[0] <= kk <= bounds.k[1]]


def _gradient(evaluate, x: np.ndarray, eps: np.ndarray, bounds: Bounds) -> np.ndarray:
    """Central-difference gradient in (r, sigma_z2); one-sided at a bound."""
    lo, hi = bounds.lower[:2], bounds.upper[:2]
    grad = np.zeros(2)
    for i in range(2):
        up = min(x[i] + eps[i], hi[i])
        down = max(x[i] - eps[i], lo[i])
        if up - down <= 0:
            continue
        xp, xm = x.copy(), x.copy()
        xp[i], xm[i] = up, down
        fp, fm = evaluate(xp), evaluate(xm)
        if math.isfinite(fp) and math.isfinite(fm):
            grad[i] = (fp - fm) / (up - down)
        elif math.isfinite(fp):
            grad[i] = math.inf
        elif math.isfinite(fm):
            grad[i] = -math.inf
    return grad


def _scaled_gradient(evaluate, x: np.ndarray, eps: np.ndarray, scale: np.ndarray, bounds: Bounds) -> np.ndarray:
    k_now = x[2]
    grad = _gradient(lambda p: evaluate(np.append(p, k_now)), x[:2], eps, bounds)
    return np.nan_to_num(grad, posinf=1e300, neginf=-1e300) * scale


def gradient_search(evaluate: Callable, bounds: Bounds, x0: np.ndarray, cfg: FitConfig) -> None:
    """Projected finite-difference ascent with quasi-Newton directions.

    Works in coordinates divided by ``gd_step``. The first move is a unit
    step along the normalised gradient; later directions come from a BFGS
    estimate of the inverse curvature, which follows the narrow ridge that
    couples ``r`` and ``sigma_z2`` instead of zig-zagging across it. Updates
    that violate the curvature condition (noise) are skipped. Each trial is
    clipped to the box, capped at ``gd_max_step`` per coordinate and halved
    until the objective improves; the search stops once the step falls below
    ``gd_tol`` or after ``gd_max_iters`` iterations.
    """
    scale = np.array(cfg.gd_step, dtype=float)
    eps = np.array(cfg.gd_fd_eps, dtype=float)
    max_move = np.array(cfg.gd_max_step, dtype=float) / scale
    floor = np.min(np.array(cfg.gd_tol, dtype=float) / scale)
    x = bounds.clip(x0)
    f = evaluate(x)
    inv_h = None
    g = None
    for _ in range(cfg.gd_max_iters):
        if cfg.search_k:
            best_k, best_f = int(x[2]), f
            for kk in _k_candidates(int(x[2]), cfg, bounds):
                trial = x.copy()
                trial[2] = kk
                ft = evaluate(trial)
                if ft > best_f:
                    best_k, best_f = kk, ft
            if best_k != int(x[2]):
                x[2], f = best_k, best_f
                inv_h, g = None, None
        if g is None:
            g = _scaled_gradient(evaluate, x, eps, scale, bounds)
        norm = float(np.linalg.norm(g))
        if norm == 0.0:
            break
        d = g / norm if inv_h is None else inv_h @ g
        if d @ g <= 0:
            d, inv_h = g / norm, None
        d = d / max(1.0, float(np.max(np.abs(d) / max_move)))
        t, accepted = 1.0, None
        while t * float(np.linalg.norm(d)) >= floor:
            trial = x.copy()
            trial[:2] += t * d * scale
            trial = bounds.clip(trial)
            if np.any(trial[:2] != x[:2]):
                ft = evaluate(trial)
                if ft > f:
                    accepted = (trial, ft)
                    break
            t *= 0.5
        if accepted is None:
            break
        trial, ft = accepted
        g_new = _scaled_gradient(evaluate, trial, eps, scale, bounds)
        step = (trial[:2] - x[:2]) / scale
        change = g - g_new
        curvature = float(step @ change)
        if curvature > 1e-12 * float(np.linalg.norm(step) * np.linalg.norm(change)):
            if inv_h is None:
                inv_h = np.eye(2) * curvature / float(change @ change)
            rho = 1.0 / curvature
            left = np.eye(2) - rho * np.outer(step, change)
            inv_h = left @ inv_h @ left.T + rho * np.outer(step, step)
        x, f, g = trial, ft, g_new


def fit(observed, cfg: FitConfig, objective: Optional[Objective] = None) -> FitResult:
    """Search for the ``(r, sigma_z2, k)`` maximising the objective.

    Parameters
    ----------
    observed : SampleSet or array_like
        Channel samples.
    cfg : FitConfig
        Search settings, including the LLF configuration.
    objective : callable, optional
        Replacement ``f(params, k)``; by default the averaged data-generation
        LLF of ``observed``.

    Raises
    ------
    FitError
        If every evaluated candidate scored ``-inf``.
    """
    obs = observed.sorted() if isinstance(observed, SampleSet) else np.sort(np.asarray(observed, dtype=float))
    if obs.size < 2:
        raise ValueError("need at least 2 observed samples")
    bounds = cfg.bounds
    start = time.perf_counter()
    if objective is None:
        def objective_fn(params, k, seed):
            return llf_mean(obs, params, replace(cfg.llf, k=k, seed=seed)).value

        evaluate = _Evaluator(objective_fn, cfg.crn, cfg.llf.seed, seeded=True)
    else:
        evaluate = _Evaluator(objective, crn=True, master=None, seeded=False)
    init = initial_estimates(obs, bounds)
    x0 = bounds.clip(np.array([init.r, init.sigma_z2, cfg.llf.k], dtype=float))
    if cfg.method == "ga":
        genetic_search(evaluate, bounds, x0, cfg)
    else:
        gradient_search(evaluate, bounds, x0, cfg)
    best = evaluate.best()
    if not math.isfinite(best.llf):
        raise FitError("objective was -inf at every candidate (no overlap with observed samples)")
    return FitResult(
        params=ShapingParams(best.r, best.sigma_z2),
        k=best.k,
        objective=best.llf,
        trace=tuple(evaluate.trace),
        evaluations=len(evaluate.trace),
        wall_time=time.perf_counter() - start,
        method=cfg.method,
        seed=best.seed,
    )


def write_trace_csv(result: FitResult, path, provenance: Optional[str] = None) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        fh.write("eval_index,r,sigma_z2,k,llf\n")
        for e in result.trace:
            fh.write(f"{e.index},{e.r:.17g},{e.sigma_z2:.17g},{e.k},{e.llf:.17g}\n")


def write_result_text(result: FitResult, path) -> None:
    lines = [
        f"r={result.params.r:.17g}",
        f"sigma_z2={result.params.sigma_z2:.17g}",
        f"k={result.k}",
        f"llf={result.objective:.17g}",
        f"evaluations={result.evaluations}",
        f"seconds={result.wall_time:.6f}",
        f"seed={describe(result.seed)}",
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
