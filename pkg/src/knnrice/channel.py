"""Lognormal-Rician intensity model: sampler and quadrature reference PDF/CDF.

The received intensity is ``I = z * y`` where

* ``ln z ~ Normal(-sigma_z2 / 2, sigma_z2)`` so that ``E[z] = 1``;
* ``y = |mu + g|**2`` is a unit-mean Rician intensity with coherent power
  ``mu**2 = r / (1 + r)`` and circular complex Gaussian scatter ``g`` of total
  power ``1 / (1 + r)``.

The reference density integrates the Rician intensity density against the
lognormal weight in the variable ``u = ln z``. The modified Bessel function is
evaluated in exponentially scaled form and merged with the exponential factor,
so the integrand is ``ive(0, x) * exp(-(sqrt((1 + r) y) - sqrt(r))**2)`` which
can never overflow.
"""

from __future__ import annotations

import csv
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, special, stats

from ._rng import SeedLike, as_generator


class InvalidParameterError(ValueError):
    """Raised for shaping parameters or arguments outside their domain."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved abs error estimate {achieved:.3g})")
        self.achieved = achieved


@dataclass(frozen=True)
class ShapingParams:
    """Channel shaping parameters.

    Attributes
    ----------
    r : float
        Coherence parameter, ratio of coherent to scattered power (>= 0).
    sigma_z2 : float
        Variance of ``ln z`` (> 0).
    """

    r: float
    sigma_z2: float

    def __post_init__(self) -> None:
        r, s2 = float(self.r), float(self.sigma_z2)
        if not (math.isfinite(r) and math.isfinite(s2)):
            raise InvalidParameterError(f"non-finite shaping parameters r={r}, sigma_z2={s2}")
        if r < 0:
            raise InvalidParameterError(f"r must be >= 0, got {r}")
        if s2 <= 0:
            raise InvalidParameterError(f"sigma_z2 must be > 0, got {s2}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "sigma_z2", s2)

    @property
    def sigma_z(self) -> float:
        return math.sqrt(self.sigma_z2)


@dataclass(frozen=True)
class SampleSet:
    """Positive intensity samples plus where they came from."""

    values: np.ndarray
    seed: SeedLike = None
    origin: Optional[ShapingParams] = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise InvalidParameterError("a SampleSet needs a 1-D array of at least 2 values")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise InvalidParameterError("intensity samples must be finite and strictly positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    def sorted(self) -> np.ndarray:
        return np.sort(self.values, kind="stable")


@dataclass(frozen=True)
class QuadratureConfig:
    rel_tol: float = 1e-8
    z_range_sigmas: float = 8.0
    max_subdivisions: int = 200

    def __post_init__(self) -> None:
        # QUADPACK refuses relative tolerances below 50 machine epsilons
        if not 50 * np.finfo(float).eps < self.rel_tol < 1:
            raise InvalidParameterError("rel_tol must lie in (50*eps, 1)")
        if self.z_range_sigmas < 6:
            raise InvalidParameterError("z_range_sigmas must be >= 6")
        # one breakpoint already splits the range in two
        if self.max_subdivisions < 2:
            raise InvalidParameterError("max_subdivisions must be >= 2")


DEFAULT_QUADRATURE = QuadratureConfig()


def _check_params(params: ShapingParams) -> ShapingParams:
    if not isinstance(params, ShapingParams):
        raise InvalidParameterError(f"expected ShapingParams, got {type(params).__name__}")
    return params


class _NormalCache:
    """LRU store of standard-normal blocks keyed by (seed, n).

    Under common random numbers every candidate re-draws the same streams;
    caching them halves the cost of a likelihood evaluation. Only seeds that
    fully determine the stream (ints and SeedSequences) are cached.
    """

    def __init__(self, max_bytes: int):
        self.max_bytes = max_bytes
        self._store: OrderedDict = OrderedDict()
        self._bytes = 0
        self._lock = threading.Lock()

    @staticmethod
    def _key(seed: SeedLike, n: int):
        if isinstance(seed, (int, np.integer)) and not isinstance(seed, bool):
            return ("int", int(seed), n)
        if isinstance(seed, np.random.SeedSequence):
            return ("ss", repr(seed.entropy), tuple(seed.spawn_key), seed.pool_size, n)
        return None

    def get(self, seed: SeedLike, n: int) -> np.ndarray:
        key = self._key(seed, n)
        if key is None or self.max_bytes <= 0:
            return as_generator(seed).standard_normal((3, n))
        with self._lock:
            block = self._store.get(key)
            if block is not None:
                self._store.move_to_end(key)
                return block
        block = as_generator(seed).standard_normal((3, n))
        block.setflags(write=False)
        with self._lock:
            if block.nbytes <= self.max_bytes and key not in self._store:
                self._store[key] = block
                self._bytes += block.nbytes
                while self._bytes > self.max_bytes:
                    _, old = self._store.popitem(last=False)
                    self._bytes -= old.nbytes
        return block

    def resize(self, max_bytes: int) -> None:
        with self._lock:
            self.max_bytes = max_bytes
            while self._store and self._bytes > max_bytes:
                _, old = self._store.popitem(last=False)
                self._bytes -= old.nbytes


_NORMALS = _NormalCache(max_bytes=512 * 2**20)


def set_normal_cache_limit(max_bytes: int) -> None:
    """Cap (or with 0, disable) the memory used to cache random streams."""
    _NORMALS.resize(int(max_bytes))


def sample(params: ShapingParams, n: int, seed: SeedLike = None) -> SampleSet:
    """Draw ``n`` i.i.d. Lognormal-Rician intensities.

    The three standard normal streams (log-amplitude, in-phase, quadrature) are
    drawn in one block, so for a fixed seed the samples are a smooth,
    deterministic function of the parameters. The likelihood stage relies on
    this for common random numbers.
    """
    _check_params(params)
    n = int(n)
    if n < 2:
        raise InvalidParameterError(f"sample count must be >= 2, got {n}")
    normals = _NORMALS.get(seed, n)
    r = params.r
    coherent = math.sqrt(r / (1.0 + r))
    scatter = math.sqrt(0.5 / (1.0 + r))
    z = np.exp(params.sigma_z * normals[0] - 0.5 * params.sigma_z2)
    y = (coherent + scatter * normals[1]) ** 2 + (scatter * normals[2]) ** 2
    values = z * y
    # y == 0 has probability zero but would break positivity.
    values[values <= 0] = np.finfo(float).tiny
    return SampleSet(values, seed=seed, origin=params)


def second_moment(params: ShapingParams) -> float:
    """Closed-form ``E[I**2] = exp(sigma_z2) * (1 + (1 + 2r) / (1 + r)**2)``."""
    r = params.r
    return math.exp(params.sigma_z2) * (1.0 + (1.0 + 2.0 * r) / (1.0 + r) ** 2)


def _u_interval(params: ShapingParams, cfg: QuadratureConfig) -> tuple[float, float]:
    mean = -0.5 * params.sigma_z2
    half = cfg.z_range_sigmas * params.sigma_z
    return mean - half, mean + half


def _lognormal_weight(u, params: ShapingParams):
    mean = -0.5 * params.sigma_z2
    return np.exp(-0.5 * (u - mean) ** 2 / params.sigma_z2) / math.sqrt(2 * math.pi * params.sigma_z2)


def _rician_intensity_pdf(y, r: float):
    """Unit-mean Rician intensity density, overflow-free."""
    y = np.asarray(y, dtype=float)
    x = 2.0 * np.sqrt((1.0 + r) * r * y)
    expo = -(np.sqrt((1.0 + r) * y) - math.sqrt(r)) ** 2
    return (1.0 + r) * special.ive(0, x) * np.exp(expo)


def _rician_intensity_cdf(y, r: float):
    y = np.asarray(y, dtype=float)
    if r == 0.0:
        return -np.expm1(-y)
    return stats.ncx2.cdf(2.0 * (1.0 + r) * y, 2, 2.0 * r)


def _pdf_integrand(u, intensity, params: ShapingParams):
    z = np.exp(u)
    return _lognormal_weight(u, params) * _rician_intensity_pdf(intensity / z, params.r) / z


def _cdf_integrand(u, lam, params: ShapingParams):
    return _lognormal_weight(u, params) * _rician_intensity_cdf(lam * np.exp(-u), params.r)


def _breakpoints(lo: float, hi: float, values: Sequence[float]) -> Optional[list[float]]:
    pts = [v for v in values if lo < v < hi]
    return pts or None


def _scalar_quad(func, lo, hi, cfg: QuadratureConfig, points=None) -> float:
    result = integrate.quad(
        func,
        lo,
        hi,
        epsabs=0.0,
        epsrel=cfg.rel_tol,
        limit=cfg.max_subdivisions,
        points=points,
        full_output=1,
    )
    value, abserr = result[0], result[1]
    # a fourth element is only present when QUADPACK reports trouble
    if len(result) > 3 and abserr > cfg.rel_tol * max(abs(value), 1e-300):
        raise QuadratureError(f"quadrature did not converge: {result[3].strip().splitlines()[0]}", abserr)
    return value


def pdf_reference(params: ShapingParams, intensity: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Density of ``I`` at a single positive intensity by adaptive quadrature."""
    _check_params(params)
    intensity = float(intensity)
    if not intensity > 0:
        raise InvalidParameterError(f"intensity must be > 0, got {intensity}")
    lo, hi = _u_interval(params, cfg)
    # the Rician factor peaks where y = I / z is near 1
    pts = _breakpoints(lo, hi, [math.log(intensity)])
    value = _scalar_quad(lambda u: _pdf_integrand(u, intensity, params), lo, hi, cfg, pts)
    return max(value, 0.0)


def cdf_reference(params: ShapingParams, lam: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """``P(I <= lam)``, integrating the conditional Rician CDF over ``ln z``."""
    _check_params(params)
    lam = float(lam)
    if not lam > 0:
        raise InvalidParameterError(f"lambda must be > 0, got {lam}")
    lo, hi = _u_interval(params, cfg)
    pts = _breakpoints(lo, hi, [math.log(lam)])
    value = _scalar_quad(lambda u: _cdf_integrand(u, lam, params), lo, hi, cfg, pts)
    return min(max(value, 0.0), 1.0)


def _vector_quad(func, lo, hi, cfg: QuadratureConfig, size: int) -> np.ndarray:
    value, err, info = integrate.quad_vec(
        func,
        lo,
        hi,
        epsabs=1e-300,
        epsrel=cfg.rel_tol,
        limit=cfg.max_subdivisions,
        norm="max",
        full_output=True,
    )
    if not info.success:
        raise QuadratureError(info.message, float(err))
    return np.asarray(value, dtype=float).reshape(size)


def pdf_reference_many(params: ShapingParams, intensities, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """Vectorised :func:`pdf_reference` sharing one adaptive subdivision.

    The tolerance applies to the largest density in the batch, so tail values
    far below the peak carry larger relative error than the scalar routine.
    """
    _check_params(params)
    x = np.asarray(intensities, dtype=float).ravel()
    if np.any(~(x > 0)):
        raise InvalidParameterError("intensities must be > 0")
    lo, hi = _u_interval(params, cfg)
    out = _vector_quad(lambda u: _pdf_integrand(u, x, params), lo, hi, cfg, x.size)
    return np.maximum(out, 0.0)


def cdf_reference_many(params: ShapingParams, lams, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """Vectorised :func:`cdf_reference` (absolute accuracy ~ ``rel_tol``)."""
    _check_params(params)
    x = np.asarray(lams, dtype=float).ravel()
    if np.any(~(x > 0)):
        raise InvalidParameterError("lambda values must be > 0")
    lo, hi = _u_interval(params, cfg)
    out = _vector_quad(lambda u: _cdf_integrand(u, x, params), lo, hi, cfg, x.size)
    return np.clip(out, 0.0, 1.0)


def exact_mean_loglik(params: ShapingParams, observed, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Mean log reference density over ``observed``; the noise-free objective."""
    values = observed.values if isinstance(observed, SampleSet) else np.asarray(observed, dtype=float)
    dens = pdf_reference_many(params, values, cfg)
    with np.errstate(divide="ignore"):
        return float(np.mean(np.log(dens)))


def write_samples_csv(samples: SampleSet, path, header_comment: Optional[str] = None) -> None:
    """One ``intensity`` column, 17 significant digits per value."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["intensity"])
        for v in samples.values:
            writer.writerow([f"{v:.17g}"])


def read_samples_csv(path) -> SampleSet:
    with Path(path).open(encoding="utf-8") as fh:
        rows = [line.strip() for line in fh if line.strip() and not line.startswith("#")]
    if not rows or rows[0] != "intensity":
        raise InvalidParameterError(f"{path}: expected an 'intensity' header")
    return SampleSet(np.array([float(v) for v in rows[1:]]))
