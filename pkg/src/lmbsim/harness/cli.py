"""``lmb-sim`` command line: run, sweep and calibrate."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from ..errors import CalibrationError, ConfigError, LmbSimError
from ..ssd.calibration import calibrate, save_calibration
from ..ssd.fit import fit_device, load_targets
from ..ssd.spec import PRESETS
from .config import load_config, parse_config, profile_text
from .report import format_table, to_csv
from .runner import load_scenario_calibration, sweep


def _parse_set(items):
    overrides = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError("expected key=value", key=item)
        key, raw = item.split("=", 1)
        overrides[key.strip()] = yaml.safe_load(raw)
    return overrides


def _scenarios(args):
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["experiment.seed"] = args.seed
    if args.profile:
        if args.config:
            raise ConfigError("give either a config file or --profile, not both", key="--profile")
        return parse_config(profile_text(args.profile), overrides)
    if not args.config:
        raise ConfigError("a config file or --profile is required", key="config")
    return load_config(args.config, overrides)


def _report_json(reports):
    return [
        {
            "row": dict(zip(("scenario", "ssd_gen", "scheme", "pattern"), r.row()[:4])),
            "error": r.error,
            "iops": r.iops,
            "wall_s": round(r.wall_s, 3),
            "header": r.header,
            "histogram": r.histogram,
            "details": r.details,
        }
        for r in reports
    ]


def cmd_run(args):
    scenarios = _scenarios(args)
    reports = sweep(scenarios, workers=args.workers)
    print(format_table(reports))
    if args.out:
        _write_outputs(Path(args.out), reports, scenarios)
    return 1 if any(r.error for r in reports) else 0


def cmd_sweep(args):
    scenarios = _scenarios(args)
    reports = sweep(scenarios, workers=args.workers)
    out = Path(args.out)
    _write_outputs(out, reports, scenarios)
    print(format_table(reports))
    print(f"\nwrote {out / 'results.csv'}")
    return 1 if any(r.error for r in reports) else 0


def _write_outputs(out: Path, reports, scenarios):
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(to_csv(reports))
    (out / "report.json").write_text(json.dumps(_report_json(reports), indent=1, default=str) + "\n")
    seen = set()
    for s in scenarios:
        calib, source = load_scenario_calibration(s)
        key = (s.ssd_gen, source)
        if key in seen:
            continue
        seen.add(key)
        name = f"calibration_{s.ssd_gen}_{'defaults' if source == 'defaults' else Path(source).stem}.yaml"
        save_calibration(calib, out / name, s.ssd_gen)


def cmd_calibrate(args):
    spec = PRESETS[args.ssd]
    if args.fit:
        targets = load_targets(None if args.fit == "builtin" else args.fit)
        device = targets["devices"].get(args.ssd)
        if device is None:
            raise CalibrationError(f"{args.fit}: no targets for {args.ssd}")
        source = "figure5_targets.yaml (bundled)" if args.fit == "builtin" else args.fit
        calib = fit_device(
            spec, device, tolerance=float(targets.get("tolerance", 0.20)),
            provenance=f"fit inputs: {args.ssd} datasheet, targets {source}",
        )
    else:
        calib = calibrate(spec, provenance=f"defaults for {args.ssd} datasheet")
    if args.out:
        save_calibration(calib, args.out, args.ssd)
    for line in calib.provenance.splitlines():
        print(f"# {line}")
    fields = ("index_engines", "index_base_ns", "n_read", "n_write", "media_units",
              "seq_read_coalesce", "seq_write_coalesce")
    for f in fields:
        print(f"{f}: {getattr(calib, f)}")
    print(f"media_service_ns: {calib.media_service_ns}")
    for bar, r in calib.fit_residuals.items():
        print(f"residual {bar}: {r:+.4f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="lmb-sim", description="CXL linked-memory-buffer SSD simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument("config", nargs="?", help="scenario YAML file")
        p.add_argument("--profile", help="bundled scenario set, e.g. figure5")
        p.add_argument("--seed", type=int, help="override experiment.seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
        p.add_argument("--workers", type=int, default=1, help="parallel simulations")

    p = sub.add_parser("run", help="run the scenario(s) in a config and print the table")
    scenario_args(p)
    p.add_argument("--out", help="also write results.csv and report.json here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run every scenario and write CSV + JSON reports")
    scenario_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="derive a calibration record")
    p.add_argument("--ssd", choices=sorted(PRESETS), required=True)
    p.add_argument("--fit", help="target table file, or 'builtin' for the bundled one")
    p.add_argument("--out", help="write the calibration YAML here")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CalibrationError, LmbSimError) as exc:
        print(f"lmb-sim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
