"""Command-line entry points.

Every subcommand reads an optional config file, applies ``--set key=value``
and flag overrides, runs one pipeline and writes its outputs under
``output.dir``. Failures exit nonzero after printing a single JSON line
``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, spin_algebra
from .analysis import (
    FitGuess,
    FitOptions,
    UnresolvedWidthError,
    fit_map,
    hwhm_extrema,
    hwhm_half_max,
)
from .bifurcation import FieldRamp, hysteresis_scan, sweep_diagram
from .config import ConfigError, RunConfig, parse_config, schema_reference
from .core_types import FieldVector
from .dataio import MapFormat, export, ingest_map
from .scan import Engine, ScanKind, run_grid_map, run_line_scan, run_radial_map


def _load(args) -> RunConfig:
    cfg = parse_config(args.config, strict=not args.lax) if args.config else RunConfig()
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value
    if getattr(args, "engine", None):
        overrides["protocol.engine"] = "ODE" if args.engine == "ode" else "CLOSED_FORM"
    if getattr(args, "sweep_rate", None) is not None:
        overrides["protocol.sweep_rate"] = repr(args.sweep_rate)
        overrides["hysteresis.rate"] = repr(args.sweep_rate)
    if args.out:
        overrides["output.dir"] = args.out
    return cfg.with_overrides(overrides) if overrides else cfg


def _model(cfg: RunConfig):
    return cfg.dynamics() if cfg["protocol.engine"] == Engine.ODE.value else cfg.modified()


def _out(cfg: RunConfig, suffix: str) -> Path:
    d = Path(cfg["output.dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d / f"{cfg['output.prefix']}_{suffix}"


def _stamp(args):
    return False if args.no_timestamp else None


def cmd_map(args, cfg: RunConfig) -> list[Path]:
    protocol = cfg.protocol()
    m = run_grid_map(replace(protocol, kind=ScanKind.GRID_XY), _model(cfg), cfg.settings())
    fmt = MapFormat.CSV_LONG if m.s_t is not None else MapFormat.CSV_GRID
    return [export(m, _out(cfg, "map.csv"), fmt.value, config_hash=cfg.hash(), timestamp=_stamp(args))]


def cmd_scan(args, cfg: RunConfig) -> list[Path]:
    protocol = cfg.protocol()
    if protocol.kind not in (ScanKind.LINE_X, ScanKind.LINE_Y):
        raise ConfigError("scan needs protocol.kind LINE_X or LINE_Y", key="protocol.kind")
    tr = run_line_scan(protocol, _model(cfg), cfg.settings())
    return [export(tr, _out(cfg, "scan.csv"), config_hash=cfg.hash(), timestamp=_stamp(args))]


def cmd_radial(args, cfg: RunConfig) -> list[Path]:
    rays = run_radial_map(replace(cfg.protocol(), kind=ScanKind.RADIAL), _model(cfg), cfg.settings())
    return [export(rays, _out(cfg, "radial.csv"), config_hash=cfg.hash(), timestamp=_stamp(args))]


def cmd_bifurcate(args, cfg: RunConfig) -> list[Path]:
    b = cfg.section("bifurcation")
    field = FieldVector(b["field_b_x"], b["field_b_y"])
    d = sweep_diagram(b["control"], (b["range_min"], b["range_max"]), b["steps"], cfg.dynamics(), field, cfg.settings())
    return [export(d, _out(cfg, "bifurcation.csv"), config_hash=cfg.hash(), timestamp=_stamp(args))]


def _ramp(cfg: RunConfig) -> FieldRamp:
    h = cfg.section("hysteresis")
    p = cfg.section("protocol")
    fixed = FieldVector(p["fixed_b_x"], p["fixed_b_y"])
    if h["component"] == "r":
        return FieldRamp.through_origin(h["angle"], h["start"], rate=h["rate"], n_samples=h["n_samples"])
    return FieldRamp.line(h["component"], h["start"], h["stop"], fixed, rate=h["rate"], n_samples=h["n_samples"])


def cmd_hysteresis(args, cfg: RunConfig) -> list[Path]:
    rep = hysteresis_scan(_ramp(cfg), cfg.dynamics(), cfg.settings(), deadband=cfg["hysteresis.deadband"])
    stamp = _stamp(args)
    return [
        export(rep, _out(cfg, "hysteresis.txt"), config_hash=cfg.hash(), timestamp=stamp),
        export(rep, _out(cfg, "hysteresis.csv"), "csv", config_hash=cfg.hash(), timestamp=stamp),
    ]


def cmd_fit(args, cfg: RunConfig) -> list[Path]:
    if not args.data:
        raise ConfigError("fit needs --data")
    data = ingest_map(args.data, args.format)
    f = cfg.section("fit")
    channels = f["channels"]
    if data.s_t is None and channels != "s_b":
        channels = "s_b"
    guess = FitGuess(cfg.modified(), f["scale_b"], f["scale_t"])
    res = fit_map(data, guess, FitOptions(channels=channels, free=f["free"], max_nfev=f["max_nfev"]))
    return [export(res, _out(cfg, "fit.txt"), config_hash=cfg.hash(), timestamp=_stamp(args))]


def cmd_widths(args, cfg: RunConfig) -> list[Path]:
    channel = cfg["analysis.channel"]
    width = hwhm_extrema if cfg["analysis.width_method"] == "EXTREMA_HALF_DISTANCE" else hwhm_half_max
    if args.data:
        m = ingest_map(args.data, args.format)
        traces = [
            m.row(int(np.argmin(np.abs(m.b_y - cfg["protocol.fixed_b_y"])))),
            m.column(int(np.argmin(np.abs(m.b_x - cfg["protocol.fixed_b_x"])))),
        ]
    else:
        base = cfg.protocol()
        traces = [
            run_line_scan(replace(base, kind=ScanKind.LINE_X), _model(cfg), cfg.settings()),
            run_line_scan(replace(base, kind=ScanKind.LINE_Y), _model(cfg), cfg.settings()),
        ]
    reports = []
    for axis, tr in zip(("x", "y"), traces):
        try:
            reports.append(width(tr, channel, axis=axis))
        except UnresolvedWidthError as exc:
            raise UnresolvedWidthError(f"axis {axis}: {exc}") from exc
    return [export(reports, _out(cfg, "widths.txt"), config_hash=cfg.hash(), timestamp=_stamp(args))]


def _frac(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def cmd_algebra(args, cfg: RunConfig | None = None) -> list[Path]:
    f = Fraction(args.f)
    weights = spin_algebra.binomial_weights_exact(f)
    denom = 2 ** spin_algebra.two_f(f)
    print(f"F: {_frac(f)}")
    print("populations: {" + ",".join(str(int(w * denom)) for w in weights) + f"}}/{denom}")
    print(f"second_moment_x: {_frac(spin_algebra.second_moment_x(f))}")
    print(f"quasi_alignment_moment: {_frac(spin_algebra.quasi_alignment_moment(f))}")
    r = spin_algebra.normalized_projection_ratio(f)
    print(f"normalized_projection_ratio: {_frac(r)} ({float(r):g})")
    return []


COMMANDS = {
    "map": (cmd_map, "closed-form or ODE map over a b_x, b_y grid"),
    "scan": (cmd_scan, "single line scan along b_x or b_y"),
    "radial": (cmd_radial, "rays from a circle toward (or through) the centre"),
    "bifurcate": (cmd_bifurcate, "equilibria and stability versus one control"),
    "hysteresis": (cmd_hysteresis, "forward and reversed field ramp"),
    "fit": (cmd_fit, "fit a map file to the corrected model"),
    "widths": (cmd_widths, "resonance widths along x and y"),
    "algebra": (cmd_algebra, "angular-momentum quantities for one F"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hanle-sp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hanle-sp {__version__}")
    parser.add_argument("--print-schema", action="store_true", help="print every config key with its default")
    sub = parser.add_subparsers(dest="command")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        if name == "algebra":
            p.add_argument("--f", required=True, help="total angular momentum, e.g. 4 or 7/2")
            continue
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--lax", action="store_true", help="warn on unknown keys instead of failing")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--out", help="output directory")
        p.add_argument("--no-timestamp", action="store_true", help="omit the provenance timestamp")
        if name in ("map", "scan", "radial", "widths"):
            p.add_argument("--engine", choices=("closed", "ode"))
        if name in ("map", "scan", "radial", "hysteresis", "widths"):
            p.add_argument("--sweep-rate", type=float, help="ramp rate, nT/s")
        if name in ("fit", "widths"):
            p.add_argument("--data", help="map file to analyse")
            p.add_argument("--format", default="CSV_GRID", choices=[f.value for f in MapFormat])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_schema:
        sys.stdout.write(schema_reference())
        return 0
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    func = COMMANDS[args.command][0]
    try:
        if args.command == "algebra":
            func(args)
        else:
            cfg = _load(args)
            for path in func(args, cfg):
                print(path)
    except (ValueError, TypeError, OSError, ArithmeticError) as exc:
        payload = {"error": type(exc).__name__, "command": args.command, "message": str(exc)}
        if isinstance(exc, ConfigError):
            payload.update(line=exc.line, key=exc.key)
        print(json.dumps(payload), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
