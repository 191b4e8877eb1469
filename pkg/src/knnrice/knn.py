"""One-dimensional k-nearest-neighbour density estimation.

For ``M`` samples, the density at sample ``n`` is

    p_k(n) = k / (M - 1) / (c_d * rho_k(n) ** d)

where ``rho_k(n)`` is the distance from sample ``n`` to its k-th nearest
neighbour among the *other* samples and ``c_d`` the volume of the unit ball.
The per-point estimates are joined by linear interpolation and renormalised
so the interpolant integrates to one over ``[C[0], C[-1]]``. Below and above
the sample support the density is undefined (see :data:`OUT_OF_SUPPORT`).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gamma

from .channel import SampleSet

#: Returned by :func:`density_at` outside the support. NaN rather than zero so
#: that callers cannot mistake "no information" for "zero density".
OUT_OF_SUPPORT = float("nan")


class DegenerateSampleError(ValueError):
    """Samples cannot support a kNN estimate (too few or repeated values)."""


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in ``d`` dimensions, ``pi**(d/2) / Gamma(d/2 + 1)``."""
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be an integer >= 1, got {d}")
    return math.pi ** (d / 2) / gamma(d / 2 + 1)


def knn_distance(sorted_values, n: int, k: int) -> float:
    """Distance from ``sorted_values[n]`` to its k-th nearest other sample.

    Two-pointer merge outward from ``n``; ``sorted_values`` must be ascending.
    """
    x = np.asarray(sorted_values, dtype=float)
    m = x.size
    if not 1 <= k <= m - 1:
        raise ValueError(f"k must lie in [1, {m - 1}], got {k}")
    if not 0 <= n < m:
        raise IndexError(f"index {n} out of range for {m} samples")
    lo, hi = n - 1, n + 1
    dist = 0.0
    for _ in range(k):
        left = x[n] - x[lo] if lo >= 0 else math.inf
        right = x[hi] - x[n] if hi < m else math.inf
        if left <= right:
            dist, lo = left, lo - 1
        else:
            dist, hi = right, hi + 1
    return float(dist)


def _knn_distances_numpy(x: np.ndarray, k: int) -> np.ndarray:
    # The k nearest neighbours of a point in 1-D are j points to its left and
    # k - j to its right for some split j; take the best split.
    m = x.size
    padded = np.concatenate((np.full(k, -np.inf), x, np.full(k, np.inf)))
    rho = np.full(m, np.inf)
    for j in range(k + 1):
        left = x - padded[k - j : k - j + m]
        right = padded[2 * k - j : 2 * k - j + m] - x
        np.minimum(rho, np.maximum(left, right), out=rho)
    return rho


def _knn_distances_scan(x, k):
    # Window [s, s + k] holds the point and its k neighbours; the best start s
    # never decreases as the point moves right, so one forward scan suffices.
    m = x.size
    rho = np.empty(m)
    s = 0
    for i in range(m):
        lo = max(0, i - k)
        hi = min(i, m - 1 - k)
        if s < lo:
            s = lo
        best = max(x[i] - x[s], x[s + k] - x[i])
        while s < hi:
            nxt = max(x[i] - x[s + 1], x[s + 1 + k] - x[i])
            if nxt > best:
                break
            best = nxt
            s += 1
        rho[i] = best
    return rho


try:
    import numba

    _knn_distances_fast = numba.njit(cache=True)(_knn_distances_scan)
except ImportError:  # pragma: no cover
    _knn_distances_fast = None


def knn_distances(sorted_values: np.ndarray, k: int) -> np.ndarray:
    """k-th neighbour distance for every point of an ascending array."""
    x = np.ascontiguousarray(sorted_values, dtype=float)
    m = x.size
    if not 1 <= k <= m - 1:
        raise ValueError(f"k must lie in [1, {m - 1}], got {k}")
    if _knn_distances_fast is None:
        return _knn_distances_numpy(x, k)
    return _knn_distances_fast(x, int(k))


@dataclass(frozen=True)
class DensityEstimate:
    """kNN density on a sorted support.

    ``densities`` are the raw estimates; multiply by ``c`` for the
    renormalised density. ``cumulative[j]`` is the normalised mass on
    ``[support[0], support[j]]``.
    """

    support: np.ndarray
    densities: np.ndarray
    c: float
    k: int
    cumulative: np.ndarray

    @property
    def size(self) -> int:
        return self.support.size

    def density_at(self, x, normalized: bool = True):
        return density_at(self, x, normalized)

    def cdf_at(self, lam):
        return cdf_at(self, lam)

    def normalized(self) -> np.ndarray:
        return self.c * self.densities


def _as_sorted(samples) -> np.ndarray:
    values = samples.values if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
    if values.ndim != 1:
        raise ValueError("samples must be one-dimensional")
    if not np.all(np.isfinite(values)):
        raise ValueError("samples must be finite")
    return np.sort(values, kind="stable")


def estimate(samples, k: int, *, presorted: bool = False) -> DensityEstimate:
    """Build the renormalised kNN density of ``samples`` with ``k`` neighbours.

    Parameters
    ----------
    samples : SampleSet or array_like
        One-dimensional finite samples; need not be sorted.
    k : int
        Neighbour count, ``1 <= k <= M - 1``.
    presorted : bool
        Skip sorting when the caller guarantees ascending order.

    Raises
    ------
    DegenerateSampleError
        If ``k`` is out of range or a point has ``k`` exact duplicates, which
        makes its kNN distance zero.
    """
    if presorted:
        support = np.array(samples, dtype=float)
    else:
        support = _as_sorted(samples)
    m = support.size
    k = int(k)
    if not 1 <= k <= m - 1:
        raise DegenerateSampleError(f"k={k} needs at least k + 1 = {k + 1} samples, got {m}")
    rho = knn_distances(support, k)
    zero = np.flatnonzero(rho == 0)
    if zero.size:
        raise DegenerateSampleError(
            f"value {support[zero[0]]!r} repeats at least {k + 1} times; kNN distance is zero"
        )
    dens = (k / (m - 1)) / (unit_ball_volume(1) * rho)
    # trapezoid on the piecewise-linear interpolant is exact
    pieces = 0.5 * np.diff(support) * (dens[1:] + dens[:-1])
    total = float(np.sum(pieces))
    if not total > 0:
        raise DegenerateSampleError("support has zero width")
    c = 1.0 / total
    cumulative = np.concatenate(([0.0], np.cumsum(pieces) * c))
    for arr in (support, dens, cumulative):
        arr.setflags(write=False)
    return DensityEstimate(support=support, densities=dens, c=c, k=k, cumulative=cumulative)


def density_at(est: DensityEstimate, x, normalized: bool = True):
    """Linearly interpolated density; :data:`OUT_OF_SUPPORT` outside the support."""
    xs = np.asarray(x, dtype=float)
    out = np.interp(xs, est.support, est.densities)
    if normalized:
        out = out * est.c
    out = np.where((xs < est.support[0]) | (xs > est.support[-1]), OUT_OF_SUPPORT, out)
    return float(out) if out.ndim == 0 else out


def cdf_at(est: DensityEstimate, lam):
    """Normalised mass of the interpolant on ``[support[0], lam]``, clamped to [0, 1]."""
    lams = np.asarray(lam, dtype=float)
    s, p = est.support, est.densities
    clipped = np.clip(lams, s[0], s[-1])
    j = np.clip(np.searchsorted(s, clipped, side="right") - 1, 0, s.size - 2)
    width = s[j + 1] - s[j]
    frac = np.divide(clipped - s[j], width, out=np.zeros_like(clipped), where=width > 0)
    p_at = p[j] + frac * (p[j + 1] - p[j])
    out = est.cumulative[j] + est.c * 0.5 * (clipped - s[j]) * (p[j] + p_at)
    out = np.where(lams >= s[-1], 1.0, np.where(lams <= s[0], 0.0, out))
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def write_density_csv(est: DensityEstimate, path) -> None:
    """Dump ``support, raw_density, normalized_density`` rows for plotting."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["support", "raw_density", "normalized_density"])
        for s, d in zip(est.support, est.densities):
            writer.writerow([f"{s:.17g}", f"{d:.17g}", f"{d * est.c:.17g}"])
