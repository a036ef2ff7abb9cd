"""Pure statistical kernels: histograms, moments, KS test, KL divergence.

Everything here is a deterministic function of its inputs; no state, no
configuration beyond what is passed in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import kolmogorov

from .config import HistogramConfig
from .errors import BinMismatch, DegenerateVariance, EmptyWindow


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Fixed-bin probability mass function over a concentration range.

    ``bin_edges`` has n+1 uniformly spaced entries for n bins; ``mass``
    sums to 1 and, after smoothing, every entry is at least the smoothing
    epsilon used to build it.
    """

    bin_edges: np.ndarray = field(repr=False)
    mass: np.ndarray = field(repr=False)
    sample_count: int

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        mass = np.asarray(self.mass, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("need at least two bin edges")
        if mass.size != edges.size - 1:
            raise ValueError("mass length must be number of bins")
        widths = np.diff(edges)
        if np.any(widths <= 0) or not np.allclose(widths, widths[0], rtol=1e-9, atol=1e-12):
            raise ValueError("bin edges must increase with uniform width")
        if abs(mass.sum() - 1.0) > 1e-12:
            raise ValueError(f"mass sums to {mass.sum()!r}, not 1")
        if np.any(mass < 0):
            raise ValueError("negative mass entry")
        edges = edges.copy()
        mass = mass.copy()
        edges.setflags(write=False)
        mass.setflags(write=False)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "mass", mass)

    @property
    def n_bins(self) -> int:
        return self.mass.size


def bin_count(lo: float, hi: float, bin_width: float) -> int:
    """Number of uniform bins tiling [lo, hi] (last bin may overhang)."""
    # the small slack keeps exact multiples from gaining a spurious bin
    return max(1, int(math.ceil((hi - lo) / bin_width - 1e-9)))


def histogram(
    values: np.ndarray,
    config: HistogramConfig,
    value_range: tuple[float, float],
) -> EmpiricalDistribution:
    """Histogram ``values`` into uniform bins tiling ``value_range``.

    Values outside the range are clamped into the nearest edge bin. After
    counting, smoothing mixes in ``smoothing_epsilon`` of uniform mass per
    bin and renormalizes, so no bin is ever empty (finite KL guaranteed).
    """
    vals = np.asarray(values, dtype=float)
    vals = vals[~np.isnan(vals)]
    if vals.size == 0:
        raise EmptyWindow("histogram of empty window")
    lo, hi = float(value_range[0]), float(value_range[1])
    if not lo < hi:
        raise ValueError(f"bad range ({lo}, {hi})")
    w = config.bin_width
    nb = bin_count(lo, hi, w)
    idx = np.clip(np.floor((vals - lo) / w).astype(int), 0, nb - 1)
    counts = np.bincount(idx, minlength=nb).astype(float)
    eps = config.smoothing_epsilon
    if nb * eps >= 1.0:
        raise ValueError(f"smoothing_epsilon {eps} too large for {nb} bins")
    mass = counts / counts.sum() * (1.0 - nb * eps) + eps
    edges = lo + w * np.arange(nb + 1)
    return EmpiricalDistribution(edges, mass, sample_count=int(vals.size))


def joint_range(
    a: np.ndarray, b: np.ndarray, config: HistogramConfig
) -> tuple[float, float]:
    """Histogram range for comparing two samples under the config policy."""
    if config.range_policy == "fixed":
        assert config.fixed_range is not None
        return config.fixed_range
    av = np.asarray(a, dtype=float)
    bv = np.asarray(b, dtype=float)
    lo = float(min(np.nanmin(av), np.nanmin(bv)))
    hi = float(max(np.nanmax(av), np.nanmax(bv)))
    if lo == hi:  # degenerate but legal: widen to one bin
        hi = lo + config.bin_width
    return lo, hi


def kl_divergence(p: EmpiricalDistribution, q: EmpiricalDistribution) -> float:
    """D(p||q) = sum_i p_i ln(p_i / q_i) over shared bins, in nats.

    Requires identical bin edges and smoothed q (no zero mass). Zero
    exactly when the mass vectors are equal; nonnegative by Gibbs'
    inequality.
    """
    if p.bin_edges.size != q.bin_edges.size or not np.allclose(
        p.bin_edges, q.bin_edges, rtol=0.0, atol=1e-9
    ):
        raise BinMismatch("histograms do not share bin edges")
    pm, qm = p.mass, q.mass
    nz = pm > 0.0
    return float(np.sum(pm[nz] * np.log(pm[nz] / qm[nz])))


def moment_match(y: np.ndarray, z: np.ndarray) -> tuple[float, float]:
    """Apparent slope and offset of z against y from matched moments.

    slope = sqrt(var[z] / var[y]), offset = E[z] - slope * E[y], with
    population (divisor-n) variances. Exactly affine-equivariant: for
    z = a*y + b with a > 0 this returns (a, b) to machine precision.
    """
    yv = np.asarray(y, dtype=float)
    zv = np.asarray(z, dtype=float)
    if yv.size < 2 or zv.size < 2:
        raise EmptyWindow(f"moment matching needs >= 2 samples, got {yv.size} and {zv.size}")
    var_y = float(yv.var())
    if var_y == 0.0:
        raise DegenerateVariance("zero variance in sensor window")
    slope = math.sqrt(float(zv.var()) / var_y)
    offset = float(zv.mean()) - slope * float(yv.mean())
    return slope, offset


def ks_two_sample(y: np.ndarray, z: np.ndarray) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    D is the sup-distance between the right-continuous empirical CDFs
    evaluated at all pooled sample points (ties handled naturally). The
    p-value evaluates the asymptotic Kolmogorov distribution at effective
    size n_e = n_y*n_z/(n_y+n_z), with the standard small-sample argument
    correction (sqrt(n_e) + 0.12 + 0.11/sqrt(n_e)) * D.
    """
    yv = np.sort(np.asarray(y, dtype=float))
    zv = np.sort(np.asarray(z, dtype=float))
    if yv.size == 0 or zv.size == 0:
        raise EmptyWindow("KS test on empty sample")
    if np.any(np.isnan(yv)) or np.any(np.isnan(zv)):
        raise ValueError("KS test received NaN samples")
    pooled = np.concatenate([yv, zv])
    cdf_y = np.searchsorted(yv, pooled, side="right") / yv.size
    cdf_z = np.searchsorted(zv, pooled, side="right") / zv.size
    d = float(np.abs(cdf_y - cdf_z).max())
    en = math.sqrt(yv.size * zv.size / (yv.size + zv.size))
    p = float(kolmogorov((en + 0.12 + 0.11 / en) * d))
    return d, min(max(p, 0.0), 1.0)
