"""Network topology and engine configuration.

A network is a set of sites (reference stations, deployed sensors, and
co-located pairs) plus per-site proxy assignments: a distribution proxy
supplying reference NO2 data for drift tests and fits, and a proximity
proxy supplying the spatially-correlated offset-error estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import yaml

from .errors import ConfigError


class SiteRole(str, Enum):
    REFERENCE = "reference"
    SENSOR = "sensor"
    CO_LOCATED = "co_located"

    @property
    def has_reference(self) -> bool:
        return self in (SiteRole.REFERENCE, SiteRole.CO_LOCATED)

    @property
    def has_sensor(self) -> bool:
        return self in (SiteRole.SENSOR, SiteRole.CO_LOCATED)


@dataclass(frozen=True)
class SiteSpec:
    site_id: str
    latitude: float
    longitude: float
    role: SiteRole
    no2_proxy_id: str | None = None
    proximity_proxy_id: str | None = None

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ConfigError(f"{self.site_id}: latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ConfigError(f"{self.site_id}: longitude {self.longitude} outside [-180, 180]")


@dataclass(frozen=True)
class DriftConfig:
    """Rolling drift-test settings: window, bounds, persistence."""

    window_days: float = 3.0
    persistence_days: float = 5.0
    ks_alpha: float = 0.05
    slope_bounds: tuple[float, float] = (0.7, 1.3)
    offset_bounds: tuple[float, float] = (-5.0, 5.0)
    min_coverage: float = 0.75

    def __post_init__(self):
        if not 0.0 < self.ks_alpha < 1.0:
            raise ConfigError(f"ks_alpha {self.ks_alpha} outside (0, 1)")
        lo, hi = self.slope_bounds
        if not lo < 1.0 < hi:
            raise ConfigError(f"slope_bounds {self.slope_bounds} must straddle 1")
        lo, hi = self.offset_bounds
        if not lo <= 0.0 <= hi:
            raise ConfigError(f"offset_bounds {self.offset_bounds} must contain 0")
        if self.window_days <= 0 or self.persistence_days <= 0:
            raise ConfigError("window_days and persistence_days must be positive")
        if not 0.0 < self.min_coverage <= 1.0:
            raise ConfigError(f"min_coverage {self.min_coverage} outside (0, 1]")

    @property
    def window_hours(self) -> int:
        return int(round(self.window_days * 24))

    @property
    def persistence_hours(self) -> int:
        return int(round(self.persistence_days * 24))


@dataclass(frozen=True)
class HistogramConfig:
    """Fixed-bin histogram settings shared by the drift and fit stages."""

    bin_width: float = 2.0
    range_policy: str = "joint_min_max"  # or "fixed"
    fixed_range: tuple[float, float] | None = None
    smoothing_epsilon: float = 1e-6

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ConfigError(f"bin_width {self.bin_width} must be positive")
        if self.smoothing_epsilon <= 0:
            raise ConfigError(f"smoothing_epsilon {self.smoothing_epsilon} must be positive")
        if self.range_policy not in ("joint_min_max", "fixed"):
            raise ConfigError(f"unknown range_policy {self.range_policy!r}")
        if self.range_policy == "fixed":
            if self.fixed_range is None or not self.fixed_range[0] < self.fixed_range[1]:
                raise ConfigError("fixed range_policy requires fixed_range with min < max")


@dataclass(frozen=True)
class SpatialCorrectionConfig:
    """Sigmoid damping and smoothing of the proximity-proxy error term."""

    sigmoid_k: float = 0.057
    rolling_hours: int = 3
    enabled: bool = True
    centered_smoothing: bool = True  # False: causal trailing mean, for streaming
    baseline_hours: int = 72  # trailing window defining the mean-error level u

    def __post_init__(self):
        if self.sigmoid_k <= 0:
            raise ConfigError(f"sigmoid_k {self.sigmoid_k} must be positive")
        if self.rolling_hours < 1:
            raise ConfigError(f"rolling_hours {self.rolling_hours} must be >= 1")
        if self.baseline_hours < 1:
            raise ConfigError(f"baseline_hours {self.baseline_hours} must be >= 1")


@dataclass(frozen=True)
class NetworkConfig:
    sites: tuple[SiteSpec, ...]
    drift: DriftConfig = field(default_factory=DriftConfig)
    histogram: HistogramConfig = field(default_factory=HistogramConfig)
    spatial: SpatialCorrectionConfig = field(default_factory=SpatialCorrectionConfig)

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        by_id = {}
        for s in self.sites:
            if s.site_id in by_id:
                raise ConfigError(f"duplicate site id {s.site_id!r}")
            by_id[s.site_id] = s
        for s in self.sites:
            if not s.role.has_sensor:
                continue
            for label, pid in (("no2_proxy", s.no2_proxy_id), ("proximity_proxy", s.proximity_proxy_id)):
                if pid is None:
                    raise ConfigError(f"{s.site_id}: sensor site needs a {label}_id")
                if pid == s.site_id:
                    raise ConfigError(f"{s.site_id}: site may not be its own {label}")
                proxy = by_id.get(pid)
                if proxy is None:
                    raise ConfigError(f"{s.site_id}: {label} {pid!r} is not a declared site")
                if not proxy.role.has_reference:
                    raise ConfigError(
                        f"{s.site_id}: {label} {pid!r} has no reference-grade NO2 channel"
                    )

    def site(self, site_id: str) -> SiteSpec:
        for s in self.sites:
            if s.site_id == site_id:
                return s
        raise ConfigError(f"unknown site {site_id!r}")

    @property
    def sensor_sites(self) -> tuple[SiteSpec, ...]:
        return tuple(s for s in self.sites if s.role.has_sensor)


def _site_from_dict(d: dict) -> SiteSpec:
    try:
        return SiteSpec(
            site_id=str(d["site_id"]),
            latitude=float(d["latitude"]),
            longitude=float(d["longitude"]),
            role=SiteRole(d.get("role", "co_located")),
            no2_proxy_id=d.get("no2_proxy_id"),
            proximity_proxy_id=d.get("proximity_proxy_id"),
        )
    except KeyError as e:
        raise ConfigError(f"site entry missing field {e}") from e
    except ValueError as e:
        raise ConfigError(f"bad site entry {d.get('site_id')!r}: {e}") from e


def _tuple2(v) -> tuple[float, float]:
    lo, hi = v
    return (float(lo), float(hi))


def network_config_from_dict(doc: dict) -> NetworkConfig:
    if "sites" not in doc or not doc["sites"]:
        raise ConfigError("config must declare at least one site")
    sites = tuple(_site_from_dict(d) for d in doc["sites"])

    dd = dict(doc.get("drift", {}))
    if "slope_bounds" in dd:
        dd["slope_bounds"] = _tuple2(dd["slope_bounds"])
    if "offset_bounds" in dd:
        dd["offset_bounds"] = _tuple2(dd["offset_bounds"])
    hd = dict(doc.get("histogram", {}))
    if hd.get("fixed_range") is not None:
        hd["fixed_range"] = _tuple2(hd["fixed_range"])
    sd = dict(doc.get("spatial", {}))
    try:
        return NetworkConfig(
            sites=sites,
            drift=DriftConfig(**dd),
            histogram=HistogramConfig(**hd),
            spatial=SpatialCorrectionConfig(**sd),
        )
    except TypeError as e:
        raise ConfigError(f"unknown configuration key: {e}") from e


def load_network_config(path: str | Path) -> NetworkConfig:
    """Load a YAML network configuration file."""
    with open(path, "r", encoding="utf-8") as f:
        doc = yaml.safe_load(f)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return network_config_from_dict(doc)


def network_config_to_dict(cfg: NetworkConfig) -> dict:
    return {
        "sites": [
            {
                "site_id": s.site_id,
                "latitude": s.latitude,
                "longitude": s.longitude,
                "role": s.role.value,
                "no2_proxy_id": s.no2_proxy_id,
                "proximity_proxy_id": s.proximity_proxy_id,
            }
            for s in cfg.sites
        ],
        "drift": {
            "window_days": cfg.drift.window_days,
            "persistence_days": cfg.drift.persistence_days,
            "ks_alpha": cfg.drift.ks_alpha,
            "slope_bounds": list(cfg.drift.slope_bounds),
            "offset_bounds": list(cfg.drift.offset_bounds),
            "min_coverage": cfg.drift.min_coverage,
        },
        "histogram": {
            "bin_width": cfg.histogram.bin_width,
            "range_policy": cfg.histogram.range_policy,
            "fixed_range": list(cfg.histogram.fixed_range) if cfg.histogram.fixed_range else None,
            "smoothing_epsilon": cfg.histogram.smoothing_epsilon,
        },
        "spatial": {
            "sigmoid_k": cfg.spatial.sigmoid_k,
            "rolling_hours": cfg.spatial.rolling_hours,
            "enabled": cfg.spatial.enabled,
            "centered_smoothing": cfg.spatial.centered_smoothing,
            "baseline_hours": cfg.spatial.baseline_hours,
        },
    }


def save_network_config(cfg: NetworkConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(network_config_to_dict(cfg), f, sort_keys=False)
