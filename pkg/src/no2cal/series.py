"""Hour-aligned time series: the shared data type of the whole engine.

An :class:`HourlySeries` stores one channel of one site on a contiguous
hourly grid. Missing hours are explicit NaN entries, never skipped
indices, so window arithmetic is plain index arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import IngestionError, InsufficientData

HOUR = timedelta(hours=1)

#: Lowest physically plausible concentration; values below are rejected at
#: ingestion even allowing for sensor offset error.
MIN_PLAUSIBLE_PPB = -20.0


class Channel(str, Enum):
    C_OX = "c_ox"
    O3 = "o3"
    NO2_SENSOR = "no2_sensor"
    NO2_REF = "no2_ref"
    O3_REF = "o3_ref"
    TEMPERATURE = "temperature"
    RELATIVE_HUMIDITY = "relative_humidity"
    WIND_SPEED = "wind_speed"
    WIND_DIRECTION = "wind_direction"

    @property
    def is_concentration(self) -> bool:
        return self in _CONCENTRATION_CHANNELS


_CONCENTRATION_CHANNELS = frozenset(
    {Channel.C_OX, Channel.O3, Channel.NO2_SENSOR, Channel.NO2_REF, Channel.O3_REF}
)


def floor_hour(ts: datetime) -> datetime:
    """UTC hour containing ``ts`` (left-closed interval convention)."""
    if ts.tzinfo is None:
        raise IngestionError(f"naive timestamp {ts!r}; UTC-aware timestamps required")
    ts = ts.astimezone(timezone.utc)
    return ts.replace(minute=0, second=0, microsecond=0)


def is_hour_aligned(ts: datetime) -> bool:
    return ts.minute == 0 and ts.second == 0 and ts.microsecond == 0


@dataclass(frozen=True)
class HourlySeries:
    """One site/channel series on a contiguous hourly UTC grid.

    ``values[i]`` belongs to the hour ``start + i hours``; NaN marks a
    missing hour. The array is frozen after construction so instances can
    be shared across parallel per-site pipelines.
    """

    site_id: str
    channel: Channel | str  # plain strings label derived products
    start: datetime
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.start.tzinfo is None or not is_hour_aligned(self.start.astimezone(timezone.utc)):
            raise IngestionError(f"series start {self.start!r} is not an hour-aligned UTC instant")
        object.__setattr__(self, "start", self.start.astimezone(timezone.utc))
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise IngestionError("series values must be a non-empty 1-d array")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    @property
    def end(self) -> datetime:
        """First hour after the series (exclusive)."""
        return self.start + HOUR * len(self)

    def hours(self) -> Iterator[datetime]:
        for i in range(len(self)):
            yield self.start + HOUR * i

    def index_of(self, ts: datetime) -> int:
        """Grid index of hour ``ts``; may be out of range."""
        return int((floor_hour(ts) - self.start) / HOUR)

    def value_at(self, ts: datetime) -> float:
        i = self.index_of(ts)
        if 0 <= i < len(self):
            return float(self.values[i])
        return math.nan

    def window(self, start: datetime, end: datetime) -> np.ndarray:
        """Values for hours in [start, end), NaN-padded outside the series."""
        i0 = self.index_of(start)
        i1 = self.index_of(end)
        if i1 <= i0:
            return np.empty(0)
        out = np.full(i1 - i0, np.nan)
        lo = max(i0, 0)
        hi = min(i1, len(self))
        if hi > lo:
            out[lo - i0 : hi - i0] = self.values[lo:hi]
        return out

    def coverage(self, start: datetime, end: datetime) -> float:
        w = self.window(start, end)
        if w.size == 0:
            return 0.0
        return float(np.sum(~np.isnan(w)) / w.size)

    def samples(self) -> Iterator[tuple[datetime, float]]:
        """(hour, value) pairs including missing hours (value NaN)."""
        for i, v in enumerate(self.values):
            yield self.start + HOUR * i, float(v)

    def with_values(self, values: np.ndarray) -> "HourlySeries":
        return HourlySeries(self.site_id, self.channel, self.start, values)

    @classmethod
    def from_samples(
        cls,
        site_id: str,
        channel: Channel,
        samples: Iterable[tuple[datetime, float | None]],
    ) -> "HourlySeries":
        """Build a series from hour-aligned (timestamp, value) pairs.

        Gaps in the timestamps become explicit NaN hours. ``None``/NaN
        values mark missing hours at their stated timestamp.
        """
        stamps: list[datetime] = []
        vals: list[float] = []
        for i, (ts, v) in enumerate(samples):
            if ts.tzinfo is None:
                raise IngestionError(f"sample {i}: naive timestamp {ts!r}")
            ts = ts.astimezone(timezone.utc)
            if not is_hour_aligned(ts):
                raise IngestionError(f"sample {i}: timestamp {ts.isoformat()} not hour-aligned")
            if stamps and ts <= stamps[-1]:
                raise IngestionError(f"sample {i}: non-increasing timestamp {ts.isoformat()}")
            stamps.append(ts)
            vals.append(math.nan if v is None else float(v))
        if not stamps:
            raise IngestionError(f"no samples for {site_id}/{channel.value}")
        n = int((stamps[-1] - stamps[0]) / HOUR) + 1
        arr = np.full(n, np.nan)
        for ts, v in zip(stamps, vals):
            arr[int((ts - stamps[0]) / HOUR)] = v
        return cls(site_id, channel, stamps[0], arr)


def hourly_average(
    raw: Sequence[tuple[datetime, float]],
    site_id: str,
    channel: Channel,
) -> HourlySeries:
    """Average sub-hourly (timestamp, value) samples onto the hourly grid.

    Each output hour is the arithmetic mean of the raw samples falling in
    [hour, hour+1); hours without samples are missing. Idempotent on
    already-hourly input. Raises IngestionError naming the first offending
    index for non-increasing timestamps or non-finite values.
    """
    if not raw:
        raise IngestionError(f"no raw samples for {site_id}/{channel.value}")
    sums: dict[datetime, float] = {}
    counts: dict[datetime, int] = {}
    prev: datetime | None = None
    for i, (ts, v) in enumerate(raw):
        if ts.tzinfo is None:
            raise IngestionError(f"raw sample {i}: naive timestamp {ts!r}")
        ts = ts.astimezone(timezone.utc)
        if prev is not None and ts <= prev:
            raise IngestionError(f"raw sample {i}: non-increasing timestamp {ts.isoformat()}")
        prev = ts
        if not math.isfinite(v):
            raise IngestionError(f"raw sample {i}: non-finite value {v!r}")
        h = floor_hour(ts)
        sums[h] = sums.get(h, 0.0) + float(v)
        counts[h] = counts.get(h, 0) + 1
    first = min(sums)
    last = max(sums)
    n = int((last - first) / HOUR) + 1
    arr = np.full(n, np.nan)
    for h, s in sums.items():
        arr[int((h - first) / HOUR)] = s / counts[h]
    return HourlySeries(site_id, channel, first, arr)


def window_pair(
    a: HourlySeries, b: HourlySeries, start: datetime, end: datetime
) -> tuple[np.ndarray, np.ndarray, float]:
    """Jointly-present values of both series over [start, end).

    Returns the paired value arrays and the fraction of window hours they
    cover. Cheaper than :func:`align` when timestamps are not needed.
    """
    n_hours = int((end - start) / HOUR)
    wa = a.window(start, end)
    wb = b.window(start, end)
    both = ~np.isnan(wa) & ~np.isnan(wb)
    achieved = float(both.sum() / n_hours) if n_hours > 0 else 0.0
    return wa[both], wb[both], achieved


def align(
    a: HourlySeries,
    b: HourlySeries,
    start: datetime,
    end: datetime,
    min_coverage: float = 0.0,
) -> tuple[list[datetime], np.ndarray, np.ndarray]:
    """Pair two series over the window [start, end).

    Only hours where both series carry a value appear, in time order.
    Raises :class:`InsufficientData` (carrying the achieved fraction) when
    the paired hours cover less than ``min_coverage`` of the window.
    """
    start = floor_hour(start)
    end = floor_hour(end)
    n_hours = int((end - start) / HOUR)
    wa = a.window(start, end)
    wb = b.window(start, end)
    both = ~np.isnan(wa) & ~np.isnan(wb)
    achieved = float(both.sum() / n_hours) if n_hours > 0 else 0.0
    if achieved < min_coverage:
        raise InsufficientData(achieved, min_coverage)
    idx = np.flatnonzero(both)
    stamps = [start + HOUR * int(i) for i in idx]
    return stamps, wa[idx], wb[idx]
