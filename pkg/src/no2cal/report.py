"""Evaluation reporting: rolling bias, summary statistics, exceedances,
error segmentation, and inverse-distance-weighted concentration rasters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .errors import EmptyInput, EmptyWindow, InsufficientData
from .series import HOUR, HourlySeries


def _overlap(a: HourlySeries, b: HourlySeries) -> tuple[datetime, np.ndarray, np.ndarray]:
    start = min(a.start, b.start)
    end = max(a.end, b.end)
    return start, a.window(start, end), b.window(start, end)


def rolling_mab(
    sensor: HourlySeries,
    reference: HourlySeries,
    window_hours: int = 72,
    min_coverage: float = 0.75,
) -> HourlySeries:
    """Mean absolute bias over the trailing ``window_hours``.

    Each output hour averages |sensor - reference| over the paired hours
    in its trailing window; hours whose window holds fewer than
    ``min_coverage`` of the possible pairs are missing. Raises
    :class:`InsufficientData` if the series never overlap.
    """
    start, s, r = _overlap(sensor, reference)
    err = np.abs(s - r)
    present = ~np.isnan(err)
    if not present.any():
        raise InsufficientData(0.0, min_coverage)
    err0 = np.where(present, err, 0.0)
    csum = np.concatenate([[0.0], np.cumsum(err0)])
    cnt = np.concatenate([[0.0], np.cumsum(present.astype(float))])
    out = np.full(err.size, np.nan)
    need = min_coverage * window_hours
    for t in range(err.size):
        lo = max(0, t - window_hours + 1)
        n = cnt[t + 1] - cnt[lo]
        if n >= need and n > 0:
            out[t] = (csum[t + 1] - csum[lo]) / n
    return HourlySeries(sensor.site_id, "rolling_mab", start, out)


@dataclass(frozen=True)
class SummaryStats:
    r2: float  # squared Pearson correlation; NaN when either side has no variance
    mab: float
    rmse: float
    n: int


def summary_stats(sensor: HourlySeries, reference: HourlySeries) -> SummaryStats:
    """R^2 (squared Pearson), mean absolute bias, and RMSE over paired hours."""
    _, s, r = _overlap(sensor, reference)
    both = ~np.isnan(s) & ~np.isnan(r)
    n = int(both.sum())
    if n < 2:
        raise EmptyWindow(f"summary statistics need >= 2 paired hours, got {n}")
    sv, rv = s[both], r[both]
    diff = sv - rv
    mab = float(np.mean(np.abs(diff)))
    rmse = float(np.sqrt(np.mean(diff * diff)))
    if sv.var() == 0.0 or rv.var() == 0.0:
        r2 = math.nan
    else:
        r2 = float(np.corrcoef(sv, rv)[0, 1] ** 2)
    return SummaryStats(r2=r2, mab=mab, rmse=rmse, n=n)


@dataclass(frozen=True)
class ExceedanceResult:
    days: tuple[datetime, ...]
    sensor_counts: tuple[int, ...]
    reference_counts: tuple[int, ...]
    spearman: float  # NaN when either count vector is constant


def exceedance_counts(
    sensor: HourlySeries,
    reference: HourlySeries,
    threshold: float = 20.0,
) -> ExceedanceResult:
    """Per-day counts of paired hours above ``threshold`` in each series,
    with the Spearman rank correlation of the two daily count vectors.
    """
    start, s, r = _overlap(sensor, reference)
    both = ~np.isnan(s) & ~np.isnan(r)
    day_index: dict[datetime, int] = {}
    days: list[datetime] = []
    s_counts: list[int] = []
    r_counts: list[int] = []
    for t in np.flatnonzero(both):
        ts = start + HOUR * int(t)
        day = datetime(ts.year, ts.month, ts.day, tzinfo=timezone.utc)
        if day not in day_index:
            day_index[day] = len(days)
            days.append(day)
            s_counts.append(0)
            r_counts.append(0)
        i = day_index[day]
        if s[t] > threshold:
            s_counts[i] += 1
        if r[t] > threshold:
            r_counts[i] += 1
    if len(days) >= 2 and len(set(s_counts)) > 1 and len(set(r_counts)) > 1:
        rho = float(spearmanr(s_counts, r_counts).statistic)
    else:
        rho = math.nan
    return ExceedanceResult(tuple(days), tuple(s_counts), tuple(r_counts), rho)


@dataclass(frozen=True)
class GridSpec:
    """Raster geometry in the ESRI ASCII grid convention."""

    ncols: int
    nrows: int
    xllcorner: float  # longitude of the lower-left corner, degrees
    yllcorner: float  # latitude of the lower-left corner, degrees
    cellsize: float  # degrees
    nodata: float = -9999.0

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(lon, lat) center coordinates; row 0 is the northernmost row."""
        x = self.xllcorner + (np.arange(self.ncols) + 0.5) * self.cellsize
        y = self.yllcorner + (np.arange(self.nrows)[::-1] + 0.5) * self.cellsize
        return x, y


def idw_grid(
    site_values: list[tuple[float, float, float]],
    grid: GridSpec,
    power: float = 2.0,
) -> np.ndarray:
    """Inverse-distance-weighted raster from (lat, lon, value) points.

    Weights are d^-power with distances in locally-scaled degrees (the
    longitude axis is compressed by cos of the mean latitude). A cell
    whose center lies within half a cell of a site takes that site's
    value exactly.
    """
    pts = [(lat, lon, v) for lat, lon, v in site_values if not math.isnan(v)]
    if not pts:
        raise EmptyInput("IDW interpolation needs at least one site value")
    lats = np.array([p[0] for p in pts])
    lons = np.array([p[1] for p in pts])
    vals = np.array([p[2] for p in pts])
    xs, ys = grid.cell_centers()
    kx = math.cos(math.radians(float(lats.mean())))
    out = np.empty((grid.nrows, grid.ncols))
    half_cell = 0.5 * grid.cellsize
    for i, y in enumerate(ys):
        dy = y - lats
        for j, x in enumerate(xs):
            dx = (x - lons) * kx
            d = np.sqrt(dx * dx + dy * dy)
            nearest = int(np.argmin(d))
            if d[nearest] < half_cell:
                out[i, j] = vals[nearest]
                continue
            w = d ** (-power)
            out[i, j] = float(np.sum(w * vals) / np.sum(w))
    return out


def write_ascii_grid(path: str | Path, raster: np.ndarray, grid: GridSpec) -> None:
    """Plain-text raster with the 6-line georeference header."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"ncols {grid.ncols}\n")
        f.write(f"nrows {grid.nrows}\n")
        f.write(f"xllcorner {grid.xllcorner!r}\n")
        f.write(f"yllcorner {grid.yllcorner!r}\n")
        f.write(f"cellsize {grid.cellsize!r}\n")
        f.write(f"nodata_value {grid.nodata!r}\n")
        for row in raster:
            f.write(" ".join(repr(float(v)) if not math.isnan(v) else repr(grid.nodata) for v in row))
            f.write("\n")


def grid_for_sites(sites, margin_cells: int = 2, target_cols: int = 24) -> GridSpec:
    """A reasonable raster frame around a set of SiteSpec coordinates."""
    lats = [s.latitude for s in sites]
    lons = [s.longitude for s in sites]
    span = max(max(lats) - min(lats), max(lons) - min(lons), 1e-3)
    cell = span / target_cols
    xll = min(lons) - margin_cells * cell
    yll = min(lats) - margin_cells * cell
    ncols = int(math.ceil((max(lons) - xll) / cell)) + margin_cells
    nrows = int(math.ceil((max(lats) - yll) / cell)) + margin_cells
    return GridSpec(ncols=ncols, nrows=nrows, xllcorner=xll, yllcorner=yll, cellsize=cell)


@dataclass(frozen=True)
class SegmentStat:
    kind: str  # rh_quartile | wind_speed_class | wind_sector | concentration_quartile
    label: str
    n: int
    mean_error: float
    sd_error: float


_WIND_SECTORS = (("N", 315.0, 45.0), ("E", 45.0, 135.0), ("S", 135.0, 225.0), ("W", 225.0, 315.0))


def _quartile_labels(values: np.ndarray) -> tuple[np.ndarray, list[str]]:
    qs = np.nanquantile(values, [0.25, 0.5, 0.75])
    idx = np.digitize(values, qs)
    labels = [
        f"Q1<= {qs[0]:.1f}",
        f"Q2<= {qs[1]:.1f}",
        f"Q3<= {qs[2]:.1f}",
        f"Q4> {qs[2]:.1f}",
    ]
    return idx, labels


def segmented_errors(
    error: np.ndarray,
    reference: np.ndarray | None = None,
    rh: np.ndarray | None = None,
    wind_speed: np.ndarray | None = None,
    wind_direction: np.ndarray | None = None,
    wind_speed_split: float = 2.0,
) -> list[SegmentStat]:
    """Mean/SD of the error inside covariate segments.

    Quartile edges come from the data at hand. Covariates that are not
    supplied (or never overlap the error) simply produce no rows.
    """
    out: list[SegmentStat] = []

    def add(kind: str, label: str, mask: np.ndarray):
        seg = error[mask & ~np.isnan(error)]
        if seg.size:
            out.append(
                SegmentStat(kind, label, int(seg.size), float(seg.mean()), float(seg.std()))
            )

    if rh is not None and np.isfinite(rh).any():
        idx, labels = _quartile_labels(rh)
        for q in range(4):
            add("rh_quartile", labels[q], (idx == q) & ~np.isnan(rh))
    if wind_speed is not None and np.isfinite(wind_speed).any():
        add("wind_speed_class", f"<{wind_speed_split}m/s", wind_speed < wind_speed_split)
        add("wind_speed_class", f">={wind_speed_split}m/s", wind_speed >= wind_speed_split)
    if wind_direction is not None and np.isfinite(wind_direction).any():
        for name, lo, hi in _WIND_SECTORS:
            wd = np.mod(wind_direction, 360.0)
            mask = ((wd >= lo) | (wd < hi)) if lo > hi else ((wd >= lo) & (wd < hi))
            add("wind_sector", name, mask & ~np.isnan(wd))
    if reference is not None and np.isfinite(reference).any():
        idx, labels = _quartile_labels(reference)
        for q in range(4):
            add("concentration_quartile", labels[q], (idx == q) & ~np.isnan(reference))
    return out


@dataclass(frozen=True)
class ReportRow:
    site_id: str
    variant: str  # uncorrected | framework | framework_es
    r2: float
    mab: float
    rmse: float
    n: int
    exceedance_spearman: float = math.nan


@dataclass
class EvaluationReport:
    rows: list[ReportRow] = field(default_factory=list)
    rolling: dict[tuple[str, str], HourlySeries] = field(default_factory=dict)
    exceedances: dict[str, ExceedanceResult] = field(default_factory=dict)
    segments: dict[str, list[SegmentStat]] = field(default_factory=dict)
