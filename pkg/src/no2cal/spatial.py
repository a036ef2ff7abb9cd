"""Spatially-correlated offset-error correction from the proximity proxy.

The residual error of a framework-corrected sensor against its co-located
reference is climate-driven and spatially correlated, so the error
measured at the nearest co-located reference site is a usable estimate of
the error at a deployed site. The transferred estimate is deliberately
conservative: a sigmoid damps values far from the recent mean difference,
and a short rolling mean smooths hour-to-hour fluctuations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime

import numpy as np

from .config import SpatialCorrectionConfig
from .series import HourlySeries

_EXP_CLIP = 700.0  # exp overflow guard; sigmoid is saturated long before


@dataclass(frozen=True)
class ErrorSeries:
    """Hourly offset-error estimate transferred from a proximity proxy.

    ``raw`` is corrected-sensor minus reference at the proxy site;
    ``damped`` is the sigmoid-damped, rolling-mean-smoothed value that
    gets subtracted downstream. ``applied`` is False wherever the proxy
    had no data that hour (no correction is made there).
    """

    site_id: str
    proxy_id: str
    start: datetime
    raw: np.ndarray = field(repr=False)
    damped: np.ndarray = field(repr=False)

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=float).copy()
        damped = np.asarray(self.damped, dtype=float).copy()
        if raw.shape != damped.shape or raw.ndim != 1:
            raise ValueError("raw and damped arrays must be equal-length 1-d")
        raw.setflags(write=False)
        damped.setflags(write=False)
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "damped", damped)

    @property
    def applied(self) -> np.ndarray:
        return ~np.isnan(self.damped)

    def __len__(self) -> int:
        return self.raw.size

    def for_site(self, site_id: str) -> "ErrorSeries":
        """Retag the same error estimate for a site that uses this proxy."""
        return replace(self, site_id=site_id)


def compute_raw_error(
    sensor_corrected: HourlySeries,
    reference_at_proxy: HourlySeries,
    for_site: str | None = None,
) -> ErrorSeries:
    """Hourly framework-corrected minus reference at the proxy site.

    Hours where either channel is missing carry NaN and stay uncorrected
    downstream. Both series must come from the proxy site (a co-located
    sensor+reference pair).
    """
    start = min(sensor_corrected.start, reference_at_proxy.start)
    end = max(sensor_corrected.end, reference_at_proxy.end)
    s = sensor_corrected.window(start, end)
    r = reference_at_proxy.window(start, end)
    raw = s - r  # NaN propagates where either side is missing
    proxy_id = sensor_corrected.site_id
    return ErrorSeries(
        site_id=for_site if for_site is not None else proxy_id,
        proxy_id=proxy_id,
        start=start,
        raw=raw,
        damped=np.full(raw.size, np.nan),
    )


def sigmoid_damping(x: np.ndarray, u: np.ndarray, k: float) -> np.ndarray:
    """Damping factor 1 / (1 + exp(-k * |x - u|)) in [0.5, 1).

    Exactly 0.5 at x = u; monotone non-decreasing in |x - u|; strictly
    below 1 for finite arguments.
    """
    arg = np.clip(-k * np.abs(np.asarray(x, dtype=float) - u), -_EXP_CLIP, _EXP_CLIP)
    return 1.0 / (1.0 + np.exp(arg))


def _trailing_mean(values: np.ndarray, window: int) -> np.ndarray:
    """Mean of available values over the trailing ``window`` entries (inclusive)."""
    out = np.full(values.size, np.nan)
    finite = np.where(np.isnan(values), 0.0, values)
    present = (~np.isnan(values)).astype(float)
    csum = np.concatenate([[0.0], np.cumsum(finite)])
    cnt = np.concatenate([[0.0], np.cumsum(present)])
    for t in range(values.size):
        lo = max(0, t - window + 1)
        n = cnt[t + 1] - cnt[lo]
        if n > 0:
            out[t] = (csum[t + 1] - csum[lo]) / n
    return out


def damp_and_smooth(raw: ErrorSeries, cfg: SpatialCorrectionConfig) -> ErrorSeries:
    """Damp each raw error through the sigmoid, then apply the rolling mean.

    The sigmoid midpoint u is the running mean of the raw error over the
    trailing ``cfg.baseline_hours`` (causal). Smoothing is a centered
    ``cfg.rolling_hours`` mean over available hours by default, or the
    trailing variant when ``centered_smoothing`` is off. Hours lacking a
    raw error stay NaN (not applied).
    """
    x = raw.raw
    u = _trailing_mean(x, cfg.baseline_hours)
    damped = sigmoid_damping(x, u, cfg.sigmoid_k) * x

    half = cfg.rolling_hours // 2
    smoothed = np.full(x.size, np.nan)
    for t in range(x.size):
        if np.isnan(x[t]):
            continue  # no raw estimate this hour: no correction
        if cfg.centered_smoothing:
            lo, hi = t - half, t - half + cfg.rolling_hours
        else:
            lo, hi = t - cfg.rolling_hours + 1, t + 1
        seg = damped[max(0, lo) : min(x.size, hi)]
        seg = seg[~np.isnan(seg)]
        smoothed[t] = seg.mean() if seg.size else np.nan
    return replace(raw, damped=smoothed)


def apply_es(calibrated: HourlySeries, damped: ErrorSeries) -> HourlySeries:
    """Subtract the damped error estimate where it exists.

    Hours without an estimate pass through bit-exact; the output grid is
    the calibrated series' grid.
    """
    out = calibrated.values.copy()
    offset = int((calibrated.start - damped.start).total_seconds() // 3600)
    lo = max(0, -offset)
    hi = min(out.size, len(damped) - offset)
    if hi > lo:
        seg = damped.damped[lo + offset : hi + offset]
        usable = ~np.isnan(seg) & ~np.isnan(out[lo:hi])
        out[lo:hi][usable] = out[lo:hi][usable] - seg[usable]
    return calibrated.with_values(out)


def tune_sigmoid_k(
    raw_errors: list[ErrorSeries],
    calibrated: dict[str, HourlySeries],
    reference: dict[str, HourlySeries],
    cfg: SpatialCorrectionConfig,
    k_grid: np.ndarray | None = None,
) -> tuple[float, list[tuple[float, float]]]:
    """Grid-search the damping rate k to minimize post-correction RMSE.

    ``raw_errors`` are per-site error estimates (already transferred from
    each site's proximity proxy); RMSE is pooled over all sites that have
    both a calibrated series and a co-located reference. Returns the best
    k and the (k, rmse) curve.
    """
    if k_grid is None:
        k_grid = np.round(np.arange(0.005, 0.2001, 0.005), 4)
    curve: list[tuple[float, float]] = []
    for k in k_grid:
        trial_cfg = replace(cfg, sigmoid_k=float(k))
        sq_sum = 0.0
        n = 0
        for err in raw_errors:
            site = err.site_id
            if site not in calibrated or site not in reference:
                continue
            corrected = apply_es(calibrated[site], damp_and_smooth(err, trial_cfg))
            ref = reference[site]
            start = max(corrected.start, ref.start)
            end = min(corrected.end, ref.end)
            if end <= start:
                continue
            c = corrected.window(start, end)
            r = ref.window(start, end)
            both = ~np.isnan(c) & ~np.isnan(r)
            sq_sum += float(np.sum((c[both] - r[both]) ** 2))
            n += int(both.sum())
        curve.append((float(k), float(np.sqrt(sq_sum / n)) if n else float("nan")))
    finite = [(k, r) for k, r in curve if not np.isnan(r)]
    if not finite:
        raise ValueError("no overlapping calibrated/reference hours to tune against")
    best_k = min(finite, key=lambda kr: kr[1])[0]
    return best_k, curve
