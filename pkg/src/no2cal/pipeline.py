"""Pipeline orchestration: ingest, drift-check, refit, correct, report.

Per sensor site, the engine walks the hourly grid keeping a current
parameter set (starting from the factory calibration). Every hour it
compares the distribution of the currently-modeled output against the
site's distribution proxy; once the alarm persistence trips, the
parameters are re-estimated on the trailing window and applied from that
hour on. After all framework stages complete, each site's
spatially-correlated offset error is estimated from its proximity proxy's
framework output and subtracted.

Two wiring modes exist: ``colocation_reference_o3`` uses the site's own
reference O3 and reference NO2 (a co-location study of the estimation
method itself), ``deployed_sensor_o3`` uses the sensor O3 channel and the
configured proxy assignments (the production arrangement).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from .calibrate import (
    FACTORY_PARAMS,
    CalibrationParams,
    FitDiagnostics,
    apply_model,
    classify_diagnostics,
    fit_params,
    init_params,
)
from .config import NetworkConfig, SiteSpec, save_network_config
from .drift import AlarmState, alarm_update, drift_check
from .errors import ConfigError, DegenerateVariance, EmptyWindow, No2CalError
from .ingest import format_timestamp, format_value, read_data_dir
from .report import (
    EvaluationReport,
    ReportRow,
    exceedance_counts,
    grid_for_sites,
    idw_grid,
    rolling_mab,
    segmented_errors,
    summary_stats,
    write_ascii_grid,
)
from .series import HOUR, Channel, HourlySeries
from .spatial import ErrorSeries, apply_es, compute_raw_error, damp_and_smooth

MODES = ("deployed_sensor_o3", "colocation_reference_o3")

FRAMEWORK = "framework"
ES = "es"


@dataclass(frozen=True)
class SiteWiring:
    site_id: str
    o3_channel: Channel
    z_site_id: str  # source of the distribution proxy series
    es_site_id: str | None  # source of the offset-error estimate


@dataclass
class RunResult:
    config: NetworkConfig
    mode: str
    wiring: dict[str, SiteWiring] = field(default_factory=dict)
    uncorrected: dict[str, HourlySeries] = field(default_factory=dict)
    framework: dict[str, HourlySeries] = field(default_factory=dict)
    framework_es: dict[str, HourlySeries] = field(default_factory=dict)
    alarms: dict[str, AlarmState] = field(default_factory=dict)
    params: dict[str, list[CalibrationParams]] = field(default_factory=dict)
    diagnostics: dict[str, FitDiagnostics] = field(default_factory=dict)
    errors: dict[str, ErrorSeries] = field(default_factory=dict)
    report: EvaluationReport = field(default_factory=EvaluationReport)
    trace: list[tuple[str, str, str]] = field(default_factory=list)  # (stage, site, detail)
    failures: dict[str, str] = field(default_factory=dict)


def toposort(nodes: list, edges: dict) -> list:
    """Deterministic Kahn topological sort; ConfigError on cycles.

    ``edges[n]`` lists the prerequisites of node n. Ties resolve in the
    order nodes were supplied.
    """
    order = {n: i for i, n in enumerate(nodes)}
    remaining = set(nodes)
    deps = {n: set(p for p in edges.get(n, ()) if p in remaining) for n in nodes}
    out = []
    while remaining:
        ready = sorted((n for n in remaining if not deps[n]), key=order.__getitem__)
        if not ready:
            cyc = sorted(remaining, key=order.__getitem__)
            raise ConfigError(f"cyclic stage dependency among {cyc}")
        for n in ready:
            out.append(n)
            remaining.remove(n)
        for n in remaining:
            deps[n] -= set(ready)
    return out


def _wire(config: NetworkConfig, mode: str, site: SiteSpec) -> SiteWiring:
    if mode == "colocation_reference_o3":
        return SiteWiring(site.site_id, Channel.O3_REF, site.site_id, site.proximity_proxy_id)
    return SiteWiring(site.site_id, Channel.O3, site.no2_proxy_id, site.proximity_proxy_id)


def _framework_stage(
    site: SiteSpec,
    wiring: SiteWiring,
    data: dict[str, dict[Channel, HourlySeries]],
    config: NetworkConfig,
    trace: list,
) -> tuple[HourlySeries, AlarmState, list[CalibrationParams]]:
    channels = data.get(site.site_id, {})
    if Channel.C_OX not in channels:
        raise No2CalError(f"{site.site_id}: no c_ox channel in data")
    if wiring.o3_channel not in channels:
        raise No2CalError(f"{site.site_id}: no {wiring.o3_channel.value} channel in data")
    z_channels = data.get(wiring.z_site_id, {})
    if Channel.NO2_REF not in z_channels:
        raise No2CalError(
            f"{site.site_id}: proxy {wiring.z_site_id} has no reference NO2 series"
        )
    c_ox = channels[Channel.C_OX]
    o3 = channels[wiring.o3_channel]
    z = z_channels[Channel.NO2_REF]

    start = c_ox.start
    n = len(c_ox)
    cox_arr = c_ox.values
    o3_arr = o3.window(start, c_ox.end)
    z_win = z.window(start, c_ox.end)

    drift_cfg = config.drift
    hist_cfg = config.histogram
    wh = drift_cfg.window_hours

    params = FACTORY_PARAMS
    fits: list[CalibrationParams] = []
    state = AlarmState(site_id=site.site_id)
    corrected = apply_model(params, cox_arr, o3_arr)
    corrected_series = HourlySeries(site.site_id, "no2_framework", start, corrected)
    output = np.array(corrected)

    for t in range(n):
        at = start + HOUR * t
        result = drift_check(corrected_series, z, at, drift_cfg)
        was_alarmed = state.alarmed
        alarm_update(state, result, drift_cfg)
        if state.alarmed and not was_alarmed:
            lo = max(0, t - wh + 1)
            mask = (
                ~np.isnan(cox_arr[lo : t + 1])
                & ~np.isnan(o3_arr[lo : t + 1])
                & ~np.isnan(z_win[lo : t + 1])
            )
            try:
                cox_w = cox_arr[lo : t + 1][mask]
                o3_w = o3_arr[lo : t + 1][mask]
                z_w = z_win[lo : t + 1][mask]
                init = init_params(z_w, cox_w, o3_w)
                params = fit_params(
                    init,
                    cox_w,
                    o3_w,
                    z_w,
                    hist_cfg,
                    fitted_at=at,
                    window=(start + HOUR * lo, at),
                )
                fits.append(params)
                corrected = apply_model(params, cox_arr, o3_arr)
                corrected_series = HourlySeries(site.site_id, "no2_framework", start, corrected)
                trace.append(
                    (FRAMEWORK, site.site_id, f"refit at {format_timestamp(at)} dkl={params.achieved_dkl:.4g}")
                )
            except (DegenerateVariance, EmptyWindow) as e:
                trace.append((FRAMEWORK, site.site_id, f"refit skipped at {format_timestamp(at)}: {e}"))
        output[t] = corrected[t]

    out_series = HourlySeries(site.site_id, "no2_framework", start, output)
    return out_series, state, fits


def run_pipeline(
    config: NetworkConfig,
    data: dict[str, dict[Channel, HourlySeries]] | str | Path,
    mode: str = "deployed_sensor_o3",
    out_dir: str | Path | None = None,
) -> RunResult:
    """Run the full management framework over a network's data.

    ``data`` is either an ingested site->channel->series mapping or a
    directory of long-format CSVs. Per-site failures are isolated: a site
    that cannot be processed is recorded in ``result.failures`` and the
    remaining sites complete. When ``out_dir`` is given the standard
    output layout is written there.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    if not isinstance(data, dict):
        data = read_data_dir(data)

    result = RunResult(config=config, mode=mode)
    sensor_sites = config.sensor_sites

    # stage graph: a site's es stage needs its own framework output and its
    # proximity proxy's framework output
    nodes: list[tuple[str, str]] = [(FRAMEWORK, s.site_id) for s in sensor_sites]
    edges: dict[tuple[str, str], list[tuple[str, str]]] = {}
    if config.spatial.enabled:
        sensor_ids = {s.site_id for s in sensor_sites}
        for s in sensor_sites:
            node = (ES, s.site_id)
            nodes.append(node)
            prereqs = [(FRAMEWORK, s.site_id)]
            if s.proximity_proxy_id in sensor_ids:
                prereqs.append((FRAMEWORK, s.proximity_proxy_id))
            edges[node] = prereqs
    order = toposort(nodes, edges)
    result.trace.append(("plan", "*", " -> ".join(f"{st}:{sid}" for st, sid in order)))

    for s in sensor_sites:
        w = _wire(config, mode, s)
        result.wiring[s.site_id] = w
        result.trace.append(
            ("wiring", s.site_id, f"o3={w.o3_channel.value} z_from={w.z_site_id} es_from={w.es_site_id}")
        )

    damped_cache: dict[str, ErrorSeries] = {}

    for stage, site_id in order:
        site = config.site(site_id)
        if site_id in result.failures:
            continue
        try:
            if stage == FRAMEWORK:
                out, state, fits = _framework_stage(site, result.wiring[site_id], data, config, result.trace)
                result.framework[site_id] = out
                result.alarms[site_id] = state
                result.params[site_id] = fits
                result.diagnostics[site_id] = classify_diagnostics(fits)
                if Channel.NO2_SENSOR in data.get(site_id, {}):
                    result.uncorrected[site_id] = data[site_id][Channel.NO2_SENSOR]
                result.trace.append(
                    (FRAMEWORK, site_id, f"done fits={len(fits)} alarmed_hours={sum(1 for _, _, a in state.history if a)}")
                )
            else:  # ES stage
                proxy_id = result.wiring[site_id].es_site_id
                framework_out = result.framework.get(site_id)
                if framework_out is None:
                    continue
                damped = None
                if proxy_id is not None and proxy_id not in result.failures:
                    if proxy_id in damped_cache:
                        damped = damped_cache[proxy_id]
                    else:
                        proxy_framework = result.framework.get(proxy_id)
                        proxy_ref = data.get(proxy_id, {}).get(Channel.NO2_REF)
                        if proxy_framework is not None and proxy_ref is not None:
                            raw = compute_raw_error(proxy_framework, proxy_ref)
                            damped = damp_and_smooth(raw, config.spatial)
                            damped_cache[proxy_id] = damped
                if damped is None:
                    result.framework_es[site_id] = framework_out
                    result.trace.append((ES, site_id, "no proximity estimate; pass-through"))
                else:
                    err = damped.for_site(site_id)
                    result.errors[site_id] = err
                    result.framework_es[site_id] = apply_es(framework_out, err)
                    result.trace.append((ES, site_id, f"corrected from {proxy_id}"))
        except No2CalError as e:
            result.failures[site_id] = str(e)
            result.trace.append((stage, site_id, f"FAILED: {e}"))
        except Exception as e:  # keep other sites alive; record the cause
            result.failures[site_id] = f"{type(e).__name__}: {e}"
            result.trace.append((stage, site_id, f"FAILED: {type(e).__name__}: {e}"))

    if not config.spatial.enabled:
        result.framework_es = dict(result.framework)

    _build_report(result, data)

    if out_dir is not None:
        write_run_outputs(result, Path(out_dir))
    return result


def _build_report(result: RunResult, data: dict[str, dict[Channel, HourlySeries]]) -> None:
    rep = result.report
    for site_id, final in result.framework_es.items():
        channels = data.get(site_id, {})
        ref = channels.get(Channel.NO2_REF)
        if ref is None:
            continue  # no co-located reference: nothing to evaluate against
        variants = {
            "uncorrected": result.uncorrected.get(site_id),
            "framework": result.framework.get(site_id),
            "framework_es": final,
        }
        exc = exceedance_counts(final, ref)
        rep.exceedances[site_id] = exc
        for variant, series in variants.items():
            if series is None:
                continue
            try:
                stats = summary_stats(series, ref)
            except EmptyWindow:
                continue
            rep.rows.append(
                ReportRow(
                    site_id=site_id,
                    variant=variant,
                    r2=stats.r2,
                    mab=stats.mab,
                    rmse=stats.rmse,
                    n=stats.n,
                    exceedance_spearman=exc.spearman if variant == "framework_es" else math.nan,
                )
            )
            rep.rolling[(site_id, variant)] = rolling_mab(series, ref)
        # error segmentation on the final product
        start = min(final.start, ref.start)
        end = max(final.end, ref.end)
        err = final.window(start, end) - ref.window(start, end)
        rep.segments[site_id] = segmented_errors(
            err,
            reference=ref.window(start, end),
            rh=_maybe_window(channels.get(Channel.RELATIVE_HUMIDITY), start, end),
            wind_speed=_maybe_window(channels.get(Channel.WIND_SPEED), start, end),
            wind_direction=_maybe_window(channels.get(Channel.WIND_DIRECTION), start, end),
        )


def _maybe_window(series: HourlySeries | None, start: datetime, end: datetime):
    return None if series is None else series.window(start, end)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def write_run_outputs(result: RunResult, out_dir: Path) -> None:
    """Write the fixed run layout: calibrated/, alarms.csv, params.csv,
    errors.csv, report.csv, grids/, plus segments, exceedances, rolling
    MAB, the execution trace, and the resolved configuration.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    calibrated = out_dir / "calibrated"
    calibrated.mkdir(exist_ok=True)
    grids = out_dir / "grids"
    grids.mkdir(exist_ok=True)

    for site_id, final in sorted(result.framework_es.items()):
        framework = result.framework.get(site_id)
        uncorrected = result.uncorrected.get(site_id)
        rows = []
        for i, (ts, v) in enumerate(final.samples()):
            rows.append(
                [
                    format_timestamp(ts),
                    site_id,
                    _fmt(uncorrected.value_at(ts) if uncorrected is not None else math.nan),
                    _fmt(framework.value_at(ts) if framework is not None else math.nan),
                    _fmt(v),
                ]
            )
        _write_csv(
            calibrated / f"{site_id}.csv",
            ["timestamp", "site_id", "uncorrected_ppb", "framework_ppb", "framework_es_ppb"],
            rows,
        )

    alarm_rows = []
    for site_id, state in sorted(result.alarms.items()):
        for ts, res, alarmed in state.history:
            alarm_rows.append(
                [
                    format_timestamp(ts),
                    site_id,
                    _fmt(res.p_ks),
                    _fmt(res.a1_hat if math.isfinite(res.a1_hat) else math.nan),
                    _fmt(res.a0_hat),
                    _fmt(res.ks_pass),
                    _fmt(res.slope_pass),
                    _fmt(res.offset_pass),
                    _fmt(alarmed),
                ]
            )
    _write_csv(
        out_dir / "alarms.csv",
        ["timestamp", "site_id", "p_ks", "a1_hat", "a0_hat", "ks_pass", "slope_pass", "offset_pass", "alarmed"],
        alarm_rows,
    )

    param_rows = []
    for site_id, fits in sorted(result.params.items()):
        for i, p in enumerate(fits):
            classification = classify_diagnostics(fits[: i + 1]).classification
            param_rows.append(
                [
                    format_timestamp(p.fitted_at) if p.fitted_at else "",
                    site_id,
                    _fmt(p.b0),
                    _fmt(p.b1),
                    _fmt(p.b2),
                    _fmt(p.achieved_dkl),
                    p.iterations,
                    _fmt(p.converged),
                    classification,
                ]
            )
    _write_csv(
        out_dir / "params.csv",
        ["fitted_at", "site_id", "b0", "b1", "b2", "achieved_dkl", "iterations", "converged", "classification"],
        param_rows,
    )

    error_rows = []
    for site_id, err in sorted(result.errors.items()):
        applied = err.applied
        for i in range(len(err)):
            error_rows.append(
                [
                    format_timestamp(err.start + HOUR * i),
                    site_id,
                    err.proxy_id,
                    _fmt(float(err.raw[i])),
                    _fmt(float(err.damped[i])),
                    _fmt(bool(applied[i])),
                ]
            )
    _write_csv(
        out_dir / "errors.csv",
        ["timestamp", "site_id", "proxy_id", "raw_error", "damped_error", "applied"],
        error_rows,
    )

    _write_csv(
        out_dir / "report.csv",
        ["site_id", "variant", "r2", "mab_ppb", "rmse_ppb", "n", "exceedance_spearman"],
        [
            [r.site_id, r.variant, _fmt(r.r2), _fmt(r.mab), _fmt(r.rmse), r.n, _fmt(r.exceedance_spearman)]
            for r in result.report.rows
        ],
    )

    segment_rows = []
    for site_id, segs in sorted(result.report.segments.items()):
        for seg in segs:
            segment_rows.append(
                [site_id, "framework_es", seg.kind, seg.label, seg.n, _fmt(seg.mean_error), _fmt(seg.sd_error)]
            )
    _write_csv(
        out_dir / "report_segments.csv",
        ["site_id", "variant", "segment_kind", "segment_label", "n", "mean_error", "sd_error"],
        segment_rows,
    )

    exceedance_rows = []
    for site_id, exc in sorted(result.report.exceedances.items()):
        for day, sc, rc in zip(exc.days, exc.sensor_counts, exc.reference_counts):
            exceedance_rows.append([day.strftime("%Y-%m-%d"), site_id, sc, rc])
    _write_csv(
        out_dir / "exceedances.csv",
        ["date", "site_id", "sensor_count", "reference_count"],
        exceedance_rows,
    )

    mab_rows = []
    for (site_id, variant), series in sorted(result.report.rolling.items()):
        for ts, v in series.samples():
            if not math.isnan(v):
                mab_rows.append([format_timestamp(ts), site_id, variant, _fmt(v)])
    _write_csv(out_dir / "mab.csv", ["timestamp", "site_id", "variant", "mab_ppb"], mab_rows)

    _write_csv(
        out_dir / "trace.csv",
        ["stage", "site_id", "detail"],
        [[stage, site_id, detail] for stage, site_id, detail in result.trace],
    )

    if result.failures:
        _write_csv(
            out_dir / "failures.csv",
            ["site_id", "error"],
            [[sid, msg] for sid, msg in sorted(result.failures.items())],
        )

    # network-mean concentration raster of the final product
    site_means = []
    for s in result.config.sites:
        series = result.framework_es.get(s.site_id)
        if series is None:
            continue
        finite = series.values[~np.isnan(series.values)]
        if finite.size:
            site_means.append((s.latitude, s.longitude, float(finite.mean())))
    if site_means:
        spec = grid_for_sites(result.config.sites)
        raster = idw_grid(site_means, spec)
        write_ascii_grid(grids / "mean_no2.asc", raster, spec)

    save_network_config(result.config, out_dir / "config.yaml")
