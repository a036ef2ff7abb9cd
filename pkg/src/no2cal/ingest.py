"""CSV ingestion and serialization.

Data files are long format with header ``timestamp,site_id,channel,value``:
ISO-8601 UTC timestamps, a channel name from :class:`Channel`, and an
empty value field marking a missing hour. Sub-hourly rows are averaged
onto the hourly grid at ingestion; hourly rows pass through unchanged
(the averaging is idempotent). Floats serialize via ``repr`` so finite
values round-trip bit-exactly.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import IngestionError
from .series import (
    MIN_PLAUSIBLE_PPB,
    Channel,
    HourlySeries,
    hourly_average,
    is_hour_aligned,
)
from .simulate import SimulatedNetwork


def parse_timestamp(text: str) -> datetime:
    """ISO-8601 UTC instant; 'Z' suffix accepted on any Python version."""
    t = text.strip()
    if t.endswith("Z"):
        t = t[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(t)
    except ValueError as e:
        raise IngestionError(f"bad timestamp {text!r}: {e}") from e
    if ts.tzinfo is None:
        raise IngestionError(f"timestamp {text!r} lacks a UTC offset")
    if ts.utcoffset().total_seconds() != 0:
        raise IngestionError(f"timestamp {text!r} is not UTC; convert before ingestion")
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def format_value(v: float) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


EXPECTED_HEADER = ["timestamp", "site_id", "channel", "value"]


def read_series_csv(path: str | Path) -> list[HourlySeries]:
    """Read one long-format CSV into per-(site, channel) hourly series."""
    path = Path(path)
    rows: dict[tuple[str, Channel], list[tuple[datetime, float | None]]] = defaultdict(list)
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != EXPECTED_HEADER:
            raise IngestionError(f"{path}: expected header {','.join(EXPECTED_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise IngestionError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            ts_text, site_id, channel_text, value_text = (c.strip() for c in row)
            ts = parse_timestamp(ts_text)
            try:
                channel = Channel(channel_text)
            except ValueError as e:
                raise IngestionError(f"{path}:{lineno}: unknown channel {channel_text!r}") from e
            if value_text == "":
                value: float | None = None
            else:
                try:
                    value = float(value_text)
                except ValueError as e:
                    raise IngestionError(f"{path}:{lineno}: bad value {value_text!r}") from e
                if not math.isfinite(value):
                    raise IngestionError(f"{path}:{lineno}: non-finite value {value_text!r}")
                if channel.is_concentration and value < MIN_PLAUSIBLE_PPB:
                    raise IngestionError(
                        f"{path}:{lineno}: {channel.value} value {value} ppb below "
                        f"plausibility floor {MIN_PLAUSIBLE_PPB} ppb"
                    )
            rows[(site_id, channel)].append((ts, value))

    out = []
    for (site_id, channel), samples in rows.items():
        if all(is_hour_aligned(ts) for ts, _ in samples):
            out.append(HourlySeries.from_samples(site_id, channel, samples))
        else:
            present = [(ts, v) for ts, v in samples if v is not None]
            if not present:
                raise IngestionError(f"{path}: {site_id}/{channel.value} has no values")
            out.append(hourly_average(present, site_id, channel))
    return out


def read_data_dir(data_dir: str | Path) -> dict[str, dict[Channel, HourlySeries]]:
    """Ingest every ``*.csv`` under ``data_dir`` (non-recursive), merged by site."""
    data_dir = Path(data_dir)
    files = sorted(data_dir.glob("*.csv"))
    if not files:
        raise IngestionError(f"no CSV files in {data_dir}")
    data: dict[str, dict[Channel, HourlySeries]] = defaultdict(dict)
    for path in files:
        if path.name == "ground_truth.csv":
            continue
        for series in read_series_csv(path):
            key = (series.site_id, series.channel)
            if series.channel in data[series.site_id]:
                raise IngestionError(
                    f"{path}: duplicate series for {key[0]}/{series.channel.value}"
                )
            data[series.site_id][series.channel] = series
    return dict(data)


def write_series_csv(path: str | Path, series_list: list[HourlySeries]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(EXPECTED_HEADER)
        for s in series_list:
            name = s.channel.value if isinstance(s.channel, Channel) else str(s.channel)
            for ts, v in s.samples():
                writer.writerow([format_timestamp(ts), s.site_id, name, format_value(v)])


def write_scenario(net: SimulatedNetwork, out_dir: str | Path) -> Path:
    """Write a generated scenario: per-site data CSVs plus the truth ledger."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for site_id, channels in net.data.items():
        series = [channels[ch] for ch in Channel if ch in channels]
        write_series_csv(out_dir / f"{site_id}.csv", series)
    with open(out_dir / "ground_truth.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(
            f,
            fieldnames=["site_id", "onset", "type", "magnitude", "b0_true", "b1_true", "b2_true"],
            lineterminator="\n",
        )
        writer.writeheader()
        for row in net.truth.ledger_rows():
            writer.writerow(row)
    return out_dir


def series_from_arrays(
    site_id: str, channel: Channel | str, start: datetime, values: np.ndarray
) -> HourlySeries:
    return HourlySeries(site_id, channel, start, values)
