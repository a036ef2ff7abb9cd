"""Synthetic hierarchical-network generator with a known ground truth.

Every pipeline stage is validated against data from here: true NO2/O3
fields with diurnal structure, AR(1) synoptic memory and log-normal skew;
sensor channels built by inverting the measurement model so that applying
the true parameters reproduces the true field exactly in the noiseless
case; configurable sensor-drift events; and a shared, spatially-correlated
offset error whose cross-site correlation decays with distance.

Proxy similarity holds by construction (sites perturb one regional field),
and its violation is a scenario knob (``field_events``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .config import NetworkConfig, SiteRole, SiteSpec
from .errors import ConfigError, ScenarioError
from .series import HOUR, Channel, HourlySeries

DEFAULT_START = datetime(2018, 1, 1, tzinfo=timezone.utc)

#: Calendar extent of drift-event transients.
OFFSET_RAMP_DAYS = 10.0
SLOPE_DECAY_DAYS = 30.0
#: Offset drift accompanying a full slope decay (gain loss shows up
#: together with baseline drift; fitted offsets must grow while fitted
#: slopes fall for the failure signature to be recognizable).
SLOPE_DECAY_OFFSET_PPB = 20.0

_MIN_DURATION_DAYS = 16  # 2 * (3-day window + 5-day persistence)


@dataclass(frozen=True)
class DiurnalCycle:
    """Sinusoidal daily cycle peaking at ``peak_hour`` UTC."""

    mean: float
    amplitude: float
    peak_hour: float

    def at(self, hour_of_day: np.ndarray) -> np.ndarray:
        return self.mean + self.amplitude * np.cos(
            2.0 * np.pi * (hour_of_day - self.peak_hour) / 24.0
        )


DEFAULT_DIURNAL: dict[str, DiurnalCycle] = {
    "no2": DiurnalCycle(mean=18.0, amplitude=9.0, peak_hour=8.0),
    "o3": DiurnalCycle(mean=35.0, amplitude=18.0, peak_hour=15.0),
    "temperature": DiurnalCycle(mean=20.0, amplitude=6.0, peak_hour=15.0),
    "relative_humidity": DiurnalCycle(mean=60.0, amplitude=-15.0, peak_hour=15.0),
}


@dataclass(frozen=True)
class DriftEvent:
    """A change in a sensor's true response parameters.

    Kinds: ``offset_step`` adds ``magnitude`` ppb to the true offset at
    onset; ``offset_ramp`` adds it linearly over OFFSET_RAMP_DAYS;
    ``slope_decay`` shrinks both response slopes by the fraction
    ``magnitude`` over SLOPE_DECAY_DAYS while the offset drifts up by
    ``magnitude * SLOPE_DECAY_OFFSET_PPB``.
    """

    site_id: str
    onset_day: float
    kind: str
    magnitude: float

    def __post_init__(self):
        if self.kind not in ("offset_step", "offset_ramp", "slope_decay"):
            raise ScenarioError(f"unknown drift event kind {self.kind!r}")
        if self.kind == "slope_decay" and not 0.0 < self.magnitude < 1.0:
            raise ScenarioError("slope_decay magnitude is the decayed fraction, in (0, 1)")


@dataclass(frozen=True)
class FieldShiftEvent:
    """A change in a site's TRUE concentration field (proxy violation knob).

    Kinds: ``offset`` adds ``magnitude`` ppb from onset; ``scale``
    multiplies by ``magnitude``; ``replace`` swaps in an independent field
    scaled by ``magnitude``, optionally with a mean-neutral square-wave
    component of amplitude ``bimodal_ppb``. The square wave alternates
    every 16 h (incommensurate with the diurnal cycle), so it reshapes the
    distribution in a way no affine map of the site's channels can mimic.
    """

    site_id: str
    onset_day: float
    kind: str
    magnitude: float
    bimodal_ppb: float = 0.0

    def __post_init__(self):
        if self.kind not in ("offset", "scale", "replace"):
            raise ScenarioError(f"unknown field event kind {self.kind!r}")


@dataclass(frozen=True)
class SharedErrorSpec:
    """Spatially-correlated sensor baseline error shared across the network.

    Per-site error mixes a common diurnal cosine with an AR(1)-in-time
    Gaussian process over sites whose cross-site covariance decays as
    exp(-distance / decay_length_km). The AR part wanders on timescales
    well inside the comparison window, so the distribution-matching stage
    cannot absorb it; only the offset-error stage can remove it.
    """

    amplitude_ppb: float
    peak_hour: float = 21.0
    decay_length_km: float = 30.0
    ar_coeff: float = 0.9
    diurnal_weight: float = 0.35


@dataclass(frozen=True)
class ScenarioSpec:
    sites: tuple[SiteSpec, ...]
    duration_days: int
    seed: int
    start: datetime = DEFAULT_START
    diurnal: dict[str, DiurnalCycle] = field(default_factory=lambda: dict(DEFAULT_DIURNAL))
    noise_sd: float = 1.0  # c_ox channel noise, ppb
    o3_noise_sd: float = 3.0  # sensor O3 channel noise, ppb
    reference_noise_sd: float = 0.0
    skew_sigma: float = 0.30  # log-normal modulation of the regional fields
    site_perturbation: float = 0.05  # per-site log-sd deviation from the regional field
    synoptic_sd: float = 4.0  # stationary sd of the AR(1) synoptic term, ppb
    drift_events: tuple[DriftEvent, ...] = ()
    field_events: tuple[FieldShiftEvent, ...] = ()
    shared_error: SharedErrorSpec | None = None
    sensor_truth: dict[str, tuple[float, float, float]] | None = None

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "drift_events", tuple(self.drift_events))
        object.__setattr__(self, "field_events", tuple(self.field_events))
        if self.duration_days < _MIN_DURATION_DAYS:
            raise ScenarioError(
                f"duration {self.duration_days} d below minimum {_MIN_DURATION_DAYS} d "
                "(twice the drift window plus persistence)"
            )
        try:
            NetworkConfig(sites=self.sites)
        except ConfigError as e:
            raise ScenarioError(f"inconsistent site/proxy topology: {e}") from e
        ids = {s.site_id for s in self.sites}
        for ev in list(self.drift_events) + list(self.field_events):
            if ev.site_id not in ids:
                raise ScenarioError(f"event references unknown site {ev.site_id!r}")

    @property
    def n_hours(self) -> int:
        return self.duration_days * 24

    def network_config(self, **overrides) -> NetworkConfig:
        return NetworkConfig(sites=self.sites, **overrides)


@dataclass
class GroundTruth:
    """Ledger of everything the generator injected."""

    start: datetime
    no2_true: dict[str, np.ndarray]
    o3_true: dict[str, np.ndarray]
    shared_error: dict[str, np.ndarray]
    b0: dict[str, np.ndarray]
    b1: dict[str, np.ndarray]
    b2: dict[str, np.ndarray]
    base_params: dict[str, tuple[float, float, float]]
    drift_events: tuple[DriftEvent, ...]
    field_events: tuple[FieldShiftEvent, ...]

    def params_at(self, site_id: str, hour: int) -> tuple[float, float, float]:
        return (
            float(self.b0[site_id][hour]),
            float(self.b1[site_id][hour]),
            float(self.b2[site_id][hour]),
        )

    def ledger_rows(self) -> list[dict]:
        """One row per site; sites with events get one row per event."""
        rows = []
        for site_id, base in self.base_params.items():
            events = [e for e in self.drift_events if e.site_id == site_id]
            if not events:
                rows.append(
                    {
                        "site_id": site_id,
                        "onset": "",
                        "type": "",
                        "magnitude": "",
                        "b0_true": base[0],
                        "b1_true": base[1],
                        "b2_true": base[2],
                    }
                )
            for ev in events:
                rows.append(
                    {
                        "site_id": site_id,
                        "onset": (self.start + HOUR * int(ev.onset_day * 24)).isoformat().replace("+00:00", "Z"),
                        "type": ev.kind,
                        "magnitude": ev.magnitude,
                        "b0_true": base[0],
                        "b1_true": base[1],
                        "b2_true": base[2],
                    }
                )
        return rows


@dataclass
class SimulatedNetwork:
    spec: ScenarioSpec
    data: dict[str, dict[Channel, HourlySeries]]
    truth: GroundTruth


def _ar1(rng: np.random.Generator, n: int, phi: float) -> np.ndarray:
    """Stationary unit-variance AR(1) path."""
    x = np.empty(n)
    x[0] = rng.standard_normal()
    innov = rng.standard_normal(n - 1) * math.sqrt(1.0 - phi * phi)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + innov[t - 1]
    return x


def _distances_km(sites: tuple[SiteSpec, ...]) -> np.ndarray:
    lat = np.array([s.latitude for s in sites])
    lon = np.array([s.longitude for s in sites])
    mean_lat = math.radians(float(lat.mean()))
    kx = 111.32 * math.cos(mean_lat)
    ky = 110.57
    dx = (lon[:, None] - lon[None, :]) * kx
    dy = (lat[:, None] - lat[None, :]) * ky
    return np.sqrt(dx * dx + dy * dy)


def _shared_error_field(
    spec: ScenarioSpec, rng: np.random.Generator, hour_of_day: np.ndarray
) -> dict[str, np.ndarray]:
    se = spec.shared_error
    n = spec.n_hours
    if se is None or se.amplitude_ppb == 0.0:
        return {s.site_id: np.zeros(n) for s in spec.sites}
    m = len(spec.sites)
    cov = np.exp(-_distances_km(spec.sites) / se.decay_length_km)
    chol = np.linalg.cholesky(cov + 1e-9 * np.eye(m))
    phi = se.ar_coeff
    w = np.empty((n, m))
    w[0] = chol @ rng.standard_normal(m)
    scale = math.sqrt(1.0 - phi * phi)
    for t in range(1, n):
        w[t] = phi * w[t - 1] + scale * (chol @ rng.standard_normal(m))
    g = np.cos(2.0 * np.pi * (hour_of_day - se.peak_hour) / 24.0)
    dw = se.diurnal_weight
    out = {}
    for j, s in enumerate(spec.sites):
        out[s.site_id] = se.amplitude_ppb * (dw * g + (1.0 - dw) * w[:, j])
    return out


def _param_trajectories(
    spec: ScenarioSpec, base: dict[str, tuple[float, float, float]]
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray], dict[str, np.ndarray]]:
    n = spec.n_hours
    hours = np.arange(n, dtype=float)
    b0s, b1s, b2s = {}, {}, {}
    for s in spec.sites:
        p0 = base[s.site_id]
        b0 = np.full(n, p0[0])
        b1 = np.full(n, p0[1])
        b2 = np.full(n, p0[2])
        for ev in spec.drift_events:
            if ev.site_id != s.site_id:
                continue
            onset = ev.onset_day * 24.0
            after = hours >= onset
            if ev.kind == "offset_step":
                b0[after] += ev.magnitude
            elif ev.kind == "offset_ramp":
                prog = np.clip((hours - onset) / (OFFSET_RAMP_DAYS * 24.0), 0.0, 1.0)
                b0 += ev.magnitude * prog * after
            elif ev.kind == "slope_decay":
                prog = np.clip((hours - onset) / (SLOPE_DECAY_DAYS * 24.0), 0.0, 1.0) * after
                b1 *= 1.0 - ev.magnitude * prog
                b2 *= 1.0 - ev.magnitude * prog
                b0 += ev.magnitude * SLOPE_DECAY_OFFSET_PPB * prog
        b0s[s.site_id], b1s[s.site_id], b2s[s.site_id] = b0, b1, b2
    return b0s, b1s, b2s


def _apply_field_events(
    spec: ScenarioSpec,
    site: SiteSpec,
    field_arr: np.ndarray,
    regional_maker,
    rng: np.random.Generator,
) -> np.ndarray:
    out = field_arr.copy()
    hours = np.arange(spec.n_hours, dtype=float)
    for ev in spec.field_events:
        if ev.site_id != site.site_id:
            continue
        after = hours >= ev.onset_day * 24.0
        if ev.kind == "offset":
            out[after] += ev.magnitude
        elif ev.kind == "scale":
            out[after] *= ev.magnitude
        elif ev.kind == "replace":
            fresh = regional_maker(rng) * ev.magnitude
            if ev.bimodal_ppb:
                block = ((hours // 16.0) % 2.0 == 0).astype(float)
                fresh = fresh + ev.bimodal_ppb * (block - block.mean())
            out[after] = fresh[after]
    return np.clip(out, 0.0, None)


def generate(spec: ScenarioSpec) -> SimulatedNetwork:
    """Generate all site series plus the ground-truth ledger.

    Deterministic in ``spec.seed``: per-purpose RNG streams are spawned in
    a fixed order, so adding sites to a scenario does not reshuffle the
    randomness of existing streams' purposes.
    """
    n = spec.n_hours
    hour_of_day = (np.arange(n) + spec.start.hour) % 24.0

    root = np.random.SeedSequence(spec.seed)
    (
        ss_regional,
        ss_weather,
        ss_shared,
        ss_params,
        ss_sites,
        ss_events,
    ) = root.spawn(6)
    rng_regional = np.random.default_rng(ss_regional)
    rng_weather = np.random.default_rng(ss_weather)
    rng_shared = np.random.default_rng(ss_shared)
    rng_params = np.random.default_rng(ss_params)
    rng_events = np.random.default_rng(ss_events)
    site_seeds = ss_sites.spawn(len(spec.sites))

    dn = spec.diurnal

    def regional_no2(rng: np.random.Generator) -> np.ndarray:
        base = dn["no2"].at(hour_of_day) + spec.synoptic_sd * _ar1(rng, n, 0.98)
        lnmod = _ar1(rng, n, 0.9)
        sig = spec.skew_sigma
        return np.clip(base * np.exp(sig * lnmod - 0.5 * sig * sig), 0.0, None)

    def regional_o3(rng: np.random.Generator) -> np.ndarray:
        base = dn["o3"].at(hour_of_day) + 0.8 * spec.synoptic_sd * _ar1(rng, n, 0.98)
        lnmod = _ar1(rng, n, 0.9)
        sig = 0.6 * spec.skew_sigma
        return np.clip(base * np.exp(sig * lnmod - 0.5 * sig * sig), 0.0, None)

    no2_regional = regional_no2(rng_regional)
    o3_regional = regional_o3(rng_regional)

    temp_regional = dn["temperature"].at(hour_of_day) + 1.5 * _ar1(rng_weather, n, 0.95)
    rh_regional = np.clip(
        dn["relative_humidity"].at(hour_of_day) + 6.0 * _ar1(rng_weather, n, 0.9), 5.0, 100.0
    )
    wind_speed = np.clip(2.5 + 1.2 * _ar1(rng_weather, n, 0.9) + 0.8 * np.cos(2 * np.pi * (hour_of_day - 15) / 24), 0.1, None)
    wind_dir = np.mod(220.0 + 50.0 * _ar1(rng_weather, n, 0.97), 360.0)

    shared = _shared_error_field(spec, rng_shared, hour_of_day)

    # true sensor parameters, then drift trajectories on top
    base_params: dict[str, tuple[float, float, float]] = {}
    for s in spec.sites:
        if spec.sensor_truth and s.site_id in spec.sensor_truth:
            base_params[s.site_id] = spec.sensor_truth[s.site_id]
        else:
            base_params[s.site_id] = (
                float(rng_params.uniform(0.0, 3.0)),
                float(rng_params.uniform(0.95, 1.15)),
                float(rng_params.uniform(0.85, 1.05)),
            )
    b0s, b1s, b2s = _param_trajectories(spec, base_params)

    data: dict[str, dict[Channel, HourlySeries]] = {}
    no2_true: dict[str, np.ndarray] = {}
    o3_true: dict[str, np.ndarray] = {}
    sp = spec.site_perturbation
    for s, seed in zip(spec.sites, site_seeds):
        rng = np.random.default_rng(seed)
        mod_no2 = _ar1(rng, n, 0.9)
        mod_o3 = _ar1(rng, n, 0.9)
        site_no2 = no2_regional * np.exp(sp * mod_no2 - 0.5 * sp * sp)
        site_o3 = o3_regional * np.exp(0.5 * sp * mod_o3 - 0.125 * sp * sp)
        site_no2 = _apply_field_events(spec, s, site_no2, regional_no2, rng_events)
        no2_true[s.site_id] = site_no2
        o3_true[s.site_id] = site_o3

        channels: dict[Channel, HourlySeries] = {}

        def put(ch: Channel, values: np.ndarray):
            channels[ch] = HourlySeries(s.site_id, ch, spec.start, values)

        if s.role.has_reference:
            rsd = spec.reference_noise_sd
            put(Channel.NO2_REF, site_no2 + (rng.normal(0.0, rsd, n) if rsd else 0.0))
            put(Channel.O3_REF, site_o3 + (rng.normal(0.0, rsd, n) if rsd else 0.0))
        if s.role.has_sensor:
            o3_sensor = site_o3 + (rng.normal(0.0, spec.o3_noise_sd, n) if spec.o3_noise_sd else 0.0)
            b0, b1, b2 = b0s[s.site_id], b1s[s.site_id], b2s[s.site_id]
            c_ox = (site_no2 + shared[s.site_id] - b0 + b2 * site_o3) / b1
            if spec.noise_sd:
                c_ox = c_ox + rng.normal(0.0, spec.noise_sd, n)
            put(Channel.C_OX, c_ox)
            put(Channel.O3, o3_sensor)
            put(Channel.NO2_SENSOR, c_ox - o3_sensor)
            put(Channel.TEMPERATURE, temp_regional + rng.normal(0.0, 0.3, n))
            put(Channel.RELATIVE_HUMIDITY, np.clip(rh_regional + rng.normal(0.0, 1.0, n), 2.0, 100.0))
            put(Channel.WIND_SPEED, np.clip(wind_speed + rng.normal(0.0, 0.2, n), 0.05, None))
            put(Channel.WIND_DIRECTION, np.mod(wind_dir + rng.normal(0.0, 5.0, n), 360.0))
        data[s.site_id] = channels

    truth = GroundTruth(
        start=spec.start,
        no2_true=no2_true,
        o3_true=o3_true,
        shared_error=shared,
        b0=b0s,
        b1=b1s,
        b2=b2s,
        base_params=base_params,
        drift_events=spec.drift_events,
        field_events=spec.field_events,
    )
    return SimulatedNetwork(spec=spec, data=data, truth=truth)


def two_site_sites() -> tuple[SiteSpec, ...]:
    """Minimal pair of co-located sites proxying each other."""
    return (
        SiteSpec("pair_a", 34.00, -117.40, SiteRole.CO_LOCATED, "pair_b", "pair_b"),
        SiteSpec("pair_b", 34.02, -117.45, SiteRole.CO_LOCATED, "pair_a", "pair_a"),
    )


def nine_site_sites() -> tuple[SiteSpec, ...]:
    """Nine co-located sites in two clusters.

    The proxy-assignment topology mirrors a real two-region deployment:
    an inland cluster of four stations and an urban cluster of five, with
    distribution proxies chosen by similarity and proximity proxies by
    distance (including one mutually-proxying pair).
    """
    return (
        SiteSpec("in_1", 34.00, -117.42, SiteRole.CO_LOCATED, "in_2", "in_2"),
        SiteSpec("in_2", 34.00, -117.49, SiteRole.CO_LOCATED, "in_1", "in_1"),
        SiteSpec("in_3", 34.10, -117.27, SiteRole.CO_LOCATED, "in_2", "in_1"),
        SiteSpec("in_4", 34.10, -117.49, SiteRole.CO_LOCATED, "in_3", "in_2"),
        SiteSpec("ur_1", 34.01, -118.07, SiteRole.CO_LOCATED, "ur_5", "ur_5"),
        SiteSpec("ur_2", 33.90, -118.22, SiteRole.CO_LOCATED, "ur_4", "ur_4"),
        SiteSpec("ur_3", 33.95, -118.43, SiteRole.CO_LOCATED, "ur_2", "ur_2"),
        SiteSpec("ur_4", 33.93, -118.22, SiteRole.CO_LOCATED, "ur_2", "ur_2"),
        SiteSpec("ur_5", 34.07, -118.23, SiteRole.CO_LOCATED, "ur_4", "ur_1"),
    )


def nine_site_scenario(duration_days: int = 120, seed: int = 7, **overrides) -> ScenarioSpec:
    """Drift-and-correct scenario on the nine-site network.

    Offset drifts large enough to push uncorrected bias toward the
    20 ppb scale, plus one slow gain failure, plus a moderate shared
    baseline error.
    """
    defaults = dict(
        sites=nine_site_sites(),
        duration_days=duration_days,
        seed=seed,
        noise_sd=1.5,
        o3_noise_sd=4.0,
        drift_events=(
            DriftEvent("in_1", 20.0, "offset_step", 12.0),
            DriftEvent("in_3", 35.0, "offset_step", 14.0),
            DriftEvent("ur_2", 25.0, "offset_ramp", 10.0),
            DriftEvent("ur_3", 50.0, "offset_step", -8.0),
            DriftEvent("in_4", 30.0, "slope_decay", 0.45),
        ),
        shared_error=SharedErrorSpec(amplitude_ppb=4.0, decay_length_km=40.0),
    )
    defaults.update(overrides)
    return ScenarioSpec(**defaults)
