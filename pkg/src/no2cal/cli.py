"""Command-line front end.

Subcommands: ``simulate`` (generate a synthetic network with ground
truth), ``ingest`` (validate and normalize raw CSVs to the hourly grid),
``run`` (full framework over a data directory), ``tune-k`` (grid-search
the damping rate), ``report`` (recompute evaluation outputs for an
existing run), and ``grid`` (IDW raster of calibrated values at an hour).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import __version__
from .config import load_network_config
from .errors import No2CalError
from .ingest import (
    format_timestamp,
    parse_timestamp,
    read_data_dir,
    read_series_csv,
    write_scenario,
    write_series_csv,
)
from .pipeline import run_pipeline, write_run_outputs
from .report import grid_for_sites, idw_grid, write_ascii_grid
from .simulate import (
    DriftEvent,
    ScenarioSpec,
    SharedErrorSpec,
    generate,
    nine_site_scenario,
    nine_site_sites,
    two_site_sites,
)
from .spatial import compute_raw_error, tune_sigmoid_k
from .series import Channel

PRESETS = ("nine-site", "pair")


def _parse_event(text: str) -> DriftEvent:
    try:
        site, kind, onset, mag = text.split(",")
        return DriftEvent(site_id=site, onset_day=float(onset), kind=kind, magnitude=float(mag))
    except ValueError as e:
        raise argparse.ArgumentTypeError(
            f"event must be site,kind,onset_day,magnitude (got {text!r}): {e}"
        )


def _parse_shared_error(text: str):
    try:
        amp, peak, decay = (float(x) for x in text.split(","))
        return SharedErrorSpec(amplitude_ppb=amp, peak_hour=peak, decay_length_km=decay)
    except ValueError as e:
        raise argparse.ArgumentTypeError(
            f"shared error must be amplitude,peak_hour,decay_km (got {text!r}): {e}"
        )


def _cmd_simulate(args) -> int:
    if args.preset == "nine-site":
        spec = nine_site_scenario(duration_days=args.days, seed=args.seed)
    else:
        spec = ScenarioSpec(sites=two_site_sites(), duration_days=args.days, seed=args.seed)
    overrides = {}
    if args.event:
        overrides["drift_events"] = tuple(args.event)
    if args.shared_error is not None:
        overrides["shared_error"] = args.shared_error
    if args.noise_sd is not None:
        overrides["noise_sd"] = args.noise_sd
    if args.o3_noise_sd is not None:
        overrides["o3_noise_sd"] = args.o3_noise_sd
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    net = generate(spec)
    out = write_scenario(net, args.out)
    from .config import save_network_config

    save_network_config(spec.network_config(), Path(args.out) / "network.yaml")
    print(f"wrote {len(net.data)} sites x {spec.duration_days} days to {out}")
    return 0


def _cmd_ingest(args) -> int:
    src = Path(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = [src] if src.is_file() else sorted(src.glob("*.csv"))
    n_series = 0
    for path in files:
        if path.name == "ground_truth.csv":
            continue
        series = read_series_csv(path)
        write_series_csv(out / path.name, series)
        n_series += len(series)
    print(f"normalized {n_series} series from {len(files)} file(s) into {out}")
    return 0


def _apply_overrides(cfg, args):
    drift = cfg.drift
    hist = cfg.histogram
    spatial = cfg.spatial
    if args.window_days is not None:
        drift = dataclasses.replace(drift, window_days=args.window_days)
    if args.persistence_days is not None:
        drift = dataclasses.replace(drift, persistence_days=args.persistence_days)
    if args.ks_alpha is not None:
        drift = dataclasses.replace(drift, ks_alpha=args.ks_alpha)
    if args.bin_width is not None:
        hist = dataclasses.replace(hist, bin_width=args.bin_width)
    if args.sigmoid_k is not None:
        spatial = dataclasses.replace(spatial, sigmoid_k=args.sigmoid_k)
    if args.no_spatial:
        spatial = dataclasses.replace(spatial, enabled=False)
    return dataclasses.replace(cfg, drift=drift, histogram=hist, spatial=spatial)


def _cmd_run(args) -> int:
    cfg = _apply_overrides(load_network_config(args.config), args)
    result = run_pipeline(cfg, args.data, mode=args.mode, out_dir=args.out)
    n_alarm = sum(
        sum(1 for _, _, alarmed in st.history if alarmed) for st in result.alarms.values()
    )
    n_fits = sum(len(f) for f in result.params.values())
    print(
        f"run complete: {len(result.framework)} sites, {n_fits} refits, "
        f"{n_alarm} alarmed hours -> {args.out}"
    )
    for site_id, msg in sorted(result.failures.items()):
        print(f"  FAILED {site_id}: {msg}", file=sys.stderr)
    return 1 if result.failures else 0


def _cmd_tune_k(args) -> int:
    cfg = load_network_config(args.config)
    data = read_data_dir(args.data)
    result = run_pipeline(
        cfg, data, mode=args.mode, out_dir=None
    )
    raw_errors = []
    calibrated = {}
    reference = {}
    for site_id, framework in result.framework.items():
        wiring = result.wiring[site_id]
        proxy = wiring.es_site_id
        if proxy is None or proxy not in result.framework:
            continue
        proxy_ref = data.get(proxy, {}).get(Channel.NO2_REF)
        site_ref = data.get(site_id, {}).get(Channel.NO2_REF)
        if proxy_ref is None or site_ref is None:
            continue
        raw_errors.append(compute_raw_error(result.framework[proxy], proxy_ref, for_site=site_id))
        calibrated[site_id] = framework
        reference[site_id] = site_ref
    if not raw_errors:
        print("no co-located proxy pairs available to tune against", file=sys.stderr)
        return 1
    best_k, curve = tune_sigmoid_k(raw_errors, calibrated, reference, cfg.spatial)
    print(f"best k = {best_k}")
    for k, rmse in curve:
        print(f"  k={k:.3f} rmse={rmse:.4f}")
    return 0


def _cmd_report(args) -> int:
    cfg = load_network_config(args.config)
    result = run_pipeline(cfg, args.data, mode=args.mode, out_dir=None)
    write_run_outputs(result, Path(args.out))
    print(f"report rewritten under {args.out}")
    return 0


def _cmd_grid(args) -> int:
    cfg = load_network_config(args.config)
    at = parse_timestamp(args.hour)
    run_dir = Path(args.run_dir)
    site_values = []
    for site in cfg.sites:
        path = run_dir / "calibrated" / f"{site.site_id}.csv"
        if not path.exists():
            continue
        import csv as _csv

        with open(path, newline="", encoding="utf-8") as f:
            for row in _csv.DictReader(f):
                if row["timestamp"] == format_timestamp(at) and row[args.variant]:
                    site_values.append((site.latitude, site.longitude, float(row[args.variant])))
                    break
    if not site_values:
        print(f"no calibrated values found at {args.hour}", file=sys.stderr)
        return 1
    spec = grid_for_sites(cfg.sites)
    if args.cellsize is not None:
        spec = dataclasses.replace(spec, cellsize=args.cellsize)
    raster = idw_grid(site_values, spec, power=args.power)
    write_ascii_grid(args.out, raster, spec)
    print(f"wrote {spec.nrows}x{spec.ncols} raster from {len(site_values)} sites to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="no2cal",
        description="Proxy-based drift detection and calibration for low-cost NO2 sensor networks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic network with ground truth")
    p.add_argument("--preset", choices=PRESETS, default="nine-site")
    p.add_argument("--days", type=int, default=120)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--event",
        action="append",
        type=_parse_event,
        help="drift event site,kind,onset_day,magnitude (repeatable; replaces preset events)",
    )
    p.add_argument("--shared-error", type=_parse_shared_error, help="amplitude,peak_hour,decay_km")
    p.add_argument("--noise-sd", type=float, default=None)
    p.add_argument("--o3-noise-sd", type=float, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("ingest", help="validate and normalize raw CSVs to the hourly grid")
    p.add_argument("--data", required=True, help="CSV file or directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("run", help="run the management framework over a data directory")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("deployed_sensor_o3", "colocation_reference_o3"), default="deployed_sensor_o3")
    p.add_argument("--window-days", type=float, default=None)
    p.add_argument("--persistence-days", type=float, default=None)
    p.add_argument("--ks-alpha", type=float, default=None)
    p.add_argument("--bin-width", type=float, default=None)
    p.add_argument("--sigmoid-k", type=float, default=None)
    p.add_argument("--no-spatial", action="store_true", help="disable the offset-error stage")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("tune-k", help="grid-search the sigmoid damping rate against co-location data")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("deployed_sensor_o3", "colocation_reference_o3"), default="deployed_sensor_o3")
    p.set_defaults(func=_cmd_tune_k)

    p = sub.add_parser("report", help="recompute evaluation outputs for a data directory")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("deployed_sensor_o3", "colocation_reference_o3"), default="deployed_sensor_o3")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("grid", help="IDW concentration raster at one hour from a finished run")
    p.add_argument("--config", required=True)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--hour", required=True, help="ISO timestamp, e.g. 2018-01-05T13:00:00Z")
    p.add_argument("--out", required=True)
    p.add_argument("--variant", default="framework_es_ppb", choices=("uncorrected_ppb", "framework_ppb", "framework_es_ppb"))
    p.add_argument("--power", type=float, default=2.0)
    p.add_argument("--cellsize", type=float, default=None)
    p.set_defaults(func=_cmd_grid)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except No2CalError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
