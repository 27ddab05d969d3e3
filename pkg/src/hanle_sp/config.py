"""Plain-text run configuration with dotted keys.

One ``section.key = value`` per line; ``#`` starts a comment. Every key has a
documented default (see :func:`schema_reference`), so a file may set only
what it needs.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .core_types import ActiveRegion, FieldVector, HalfPlane, ModelRates, ModifiedModelParams, Sector
from .dynamics import DynamicsConfig, IntegratorSettings, Variant
from .scan import Direction, Engine, ScanKind, ScanProtocol


class ConfigError(ValueError):
    """Bad configuration; ``line`` and ``key`` point at the offending entry."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("none", "") else float(text)


def _tuple_str(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _fmt(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(value)
    return str(value)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    doc: str


SCHEMA: dict[str, Key] = {
    "rates.gamma1": Key(float, 1.0, "orientation relaxation rate, 1/s"),
    "rates.gamma2": Key(float, 10.0, "alignment relaxation rate, 1/s"),
    "rates.chi": Key(float, 0.0, "spontaneous-polarization gain, 1/s"),
    "rates.eta": Key(float, 0.0, "cubic saturation coefficient"),
    "rates.alpha": Key(float, 0.0, "alignment-to-orientation seeding rate, 1/s"),
    "rates.xi": Key(float, 0.0, "projection of p_y onto the detected signal (signed)"),
    "rates.a_x": Key(float, 1.0, "pumped alignment (signed); pump rate = |a_x| * gamma2"),
    "rates.gamma_gyro": Key(float, 3.5, "gyromagnetic ratio, Hz/nT"),
    "dynamics.variant": Key(lambda s: Variant(s.strip().upper()).value, "SP", "SP, AOC or BOTH"),
    "dynamics.aoc_alpha": Key(float, 0.0, "dissipative alignment loss; AOC/BOTH only"),
    "modified.k_aniso": Key(float, 1.0, "ratio of y to x resonance widths"),
    "modified.b_y0": Key(float, 0.0, "internal transverse field, nT"),
    "modified.decay_coeff": Key(float, 0.0, "signal decay per nT of |B_xy|"),
    "modified.branch_sign": Key(int, 1, "sign of the effective field at b_y = 0"),
    "modified.region": Key(str, "", "active region: 'halfplane:nx,ny,offset;sector:tmin,tmax[,rmin,rmax]'; empty = everywhere"),
    "protocol.kind": Key(lambda s: ScanKind(s.strip().upper()).value, "LINE_X", "LINE_X, LINE_Y, GRID_XY or RADIAL"),
    "protocol.engine": Key(lambda s: Engine(s.strip().upper()).value, "CLOSED_FORM", "CLOSED_FORM or ODE"),
    "protocol.direction": Key(lambda s: Direction(s.strip().lower()).value, "forward", "forward or backward"),
    "protocol.sweep_min": Key(float, -100.0, "sweep start, nT"),
    "protocol.sweep_max": Key(float, 100.0, "sweep end, nT"),
    "protocol.n_points": Key(int, 201, "samples per line or ray"),
    "protocol.sweep_rate": Key(_opt_float, None, "ODE ramp rate in nT/s; none = 1e3 relaxation times per sweep"),
    "protocol.fixed_b_x": Key(float, 0.0, "non-swept b_x, nT"),
    "protocol.fixed_b_y": Key(float, 0.0, "non-swept b_y, nT"),
    "protocol.fixed_b_z": Key(float, 0.0, "b_z, nT"),
    "protocol.y_min": Key(float, -100.0, "first grid row, nT"),
    "protocol.y_max": Key(float, 100.0, "last grid row, nT"),
    "protocol.n_rows": Key(int, 21, "grid rows"),
    "protocol.radius": Key(float, 42.5, "radial scan radius, nT"),
    "protocol.angle_step": Key(float, 5.0, "radial angular step, degrees"),
    "protocol.through_center": Key(_bool, False, "continue rays to the opposite edge"),
    "protocol.semicircle": Key(_bool, False, "rays over 180 degrees only"),
    "protocol.smoothing_width": Key(int, 1, "odd moving-average width; 1 = off"),
    "protocol.seed": Key(float, 1e-6, "p_z seed at the start of each ODE line"),
    "protocol.carry_over": Key(_bool, False, "keep ODE state between grid rows"),
    "integrator.method": Key(lambda s: s.strip().lower(), "adaptive", "adaptive or fixed"),
    "integrator.rel_tol": Key(float, 1e-9, "relative tolerance (adaptive)"),
    "integrator.abs_tol": Key(float, 1e-12, "absolute tolerance (adaptive)"),
    "integrator.max_step": Key(float, math.inf, "largest step; required for fixed"),
    "integrator.max_time": Key(float, 1e4, "time limit for steady-state runs"),
    "integrator.convergence_eps": Key(float, 1e-9, "derivative norm counted as stationary"),
    "bifurcation.control": Key(str, "chi", "swept rate name or b_x/b_y"),
    "bifurcation.range_min": Key(float, 0.0, "sweep start"),
    "bifurcation.range_max": Key(float, 2.0, "sweep end"),
    "bifurcation.steps": Key(int, 41, "columns"),
    "bifurcation.field_b_x": Key(float, 0.0, "fixed b_x during rate sweeps, nT"),
    "bifurcation.field_b_y": Key(float, 0.0, "fixed b_y during rate sweeps, nT"),
    "hysteresis.component": Key(lambda s: s.strip(), "b_y", "ramped component: b_x, b_y or r (through the origin)"),
    "hysteresis.start": Key(float, -1.0, "ramp start, nT"),
    "hysteresis.stop": Key(float, 1.0, "ramp end, nT"),
    "hysteresis.angle": Key(float, 90.0, "ray angle for component r, degrees"),
    "hysteresis.rate": Key(_opt_float, None, "ramp rate nT/s; none = 1e3 relaxation times"),
    "hysteresis.n_samples": Key(int, 201, "samples per sweep"),
    "hysteresis.deadband": Key(float, 0.1, "branch-switch deadband, fraction of the pitchfork amplitude"),
    "analysis.channel": Key(lambda s: s.strip(), "s_b", "s_b or s_t"),
    "analysis.width_method": Key(lambda s: s.strip().upper(), "EXTREMA_HALF_DISTANCE", "EXTREMA_HALF_DISTANCE or HALF_MAX"),
    "fit.channels": Key(lambda s: s.strip(), "joint", "joint, s_b or s_t"),
    "fit.free": Key(_tuple_str, ("gamma", "k_aniso", "b_y0", "decay_coeff"), "comma-separated parameters to fit"),
    "fit.max_nfev": Key(int, 2000, "residual evaluation budget"),
    "fit.scale_b": Key(float, 1.0, "initial s_b amplitude scale"),
    "fit.scale_t": Key(float, 1.0, "initial s_t amplitude scale"),
    "output.dir": Key(str, ".", "output directory"),
    "output.prefix": Key(str, "hanle", "output file prefix"),
    "run.seed": Key(int, 0, "random seed recorded in provenance"),
}


def schema_reference() -> str:
    """Every key with its default and meaning, as a valid config file."""
    lines = ["# hanle-sp configuration reference"]
    section = None
    for key, entry in SCHEMA.items():
        sec = key.split(".")[0]
        if sec != section:
            lines.append(f"\n# [{sec}]")
            section = sec
        lines.append(f"# {entry.doc}")
        lines.append(f"{key} = {_fmt(entry.default)}")
    return "\n".join(lines) + "\n"


def parse_region(text: str) -> ActiveRegion | None:
    text = text.strip()
    if not text:
        return None
    shapes = []
    for part in text.split(";"):
        kind, _, args = part.partition(":")
        nums = [float(v) for v in args.split(",") if v.strip()]
        kind = kind.strip().lower()
        if kind == "halfplane":
            shapes.append(HalfPlane(*nums))
        elif kind == "sector":
            shapes.append(Sector(*nums))
        else:
            raise ValueError(f"unknown region shape {kind!r}")
    return ActiveRegion(tuple(shapes))


@dataclass
class RunConfig:
    """Parsed configuration; the typed objects are built and validated eagerly."""

    values: dict[str, Any] = field(default_factory=lambda: {k: s.default for k, s in SCHEMA.items()})

    def __post_init__(self) -> None:
        self.validate()

    def __getitem__(self, key: str):
        return self.values[key]

    def section(self, name: str) -> dict[str, Any]:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def rates(self) -> ModelRates:
        return ModelRates(**self.section("rates"))

    def dynamics(self) -> DynamicsConfig:
        d = self.section("dynamics")
        return DynamicsConfig(self.rates(), aoc_alpha=d["aoc_alpha"], variant=d["variant"])

    def modified(self) -> ModifiedModelParams:
        m = self.section("modified")
        return ModifiedModelParams(
            self.rates(), m["k_aniso"], m["b_y0"], m["decay_coeff"], parse_region(m["region"]), m["branch_sign"]
        )

    def protocol(self) -> ScanProtocol:
        p = self.section("protocol")
        return ScanProtocol(
            kind=p["kind"],
            sweep_range=(p["sweep_min"], p["sweep_max"]),
            fixed=FieldVector(p["fixed_b_x"], p["fixed_b_y"], p["fixed_b_z"]),
            n_points=p["n_points"],
            sweep_rate=p["sweep_rate"],
            direction=p["direction"],
            engine=p["engine"],
            y_range=(p["y_min"], p["y_max"]),
            n_rows=p["n_rows"],
            radius=p["radius"],
            angle_step=p["angle_step"],
            through_center=p["through_center"],
            semicircle=p["semicircle"],
            smoothing_width=p["smoothing_width"],
            seed=p["seed"],
            carry_over=p["carry_over"],
        )

    def settings(self) -> IntegratorSettings:
        return IntegratorSettings(**self.section("integrator"))

    def validate(self) -> None:
        checks = [
            ("rates", self.rates),
            ("dynamics", self.dynamics),
            ("modified", self.modified),
            ("integrator", self.settings),
        ]
        for name, build in checks:
            try:
                build()
            except (ValueError, TypeError) as exc:
                raise ConfigError(str(exc), key=name) from exc
        kind = self.values["protocol.kind"]
        try:
            if kind == "RADIAL" or self.values["protocol.sweep_min"] != self.values["protocol.sweep_max"]:
                self.protocol()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), key="protocol") from exc
        for key, options in (
            ("analysis.channel", ("s_b", "s_t")),
            ("analysis.width_method", ("EXTREMA_HALF_DISTANCE", "HALF_MAX")),
            ("fit.channels", ("joint", "s_b", "s_t")),
            ("hysteresis.component", ("b_x", "b_y", "r")),
        ):
            if self.values[key] not in options:
                raise ConfigError(f"expected one of {options}", key=key)

    def serialize(self) -> str:
        """Canonical text: every key, schema order, shortest round-trip floats."""
        return "".join(f"{k} = {_fmt(self.values[k])}\n" for k in SCHEMA)

    def hash(self) -> str:
        """Digest of everything that affects results (``output.*`` is left out)."""
        text = "".join(line for line in self.serialize().splitlines(True) if not line.startswith("output."))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_overrides(self, pairs: dict[str, str]) -> "RunConfig":
        values = dict(self.values)
        for key, raw in pairs.items():
            values[key] = _convert(key, raw, None, strict=True)
        return RunConfig(values)


def _convert(key: str, raw: str, line: int | None, strict: bool):
    if key not in SCHEMA:
        raise ConfigError("unknown key", line, key)
    try:
        return SCHEMA[key].parse(raw.strip())
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid value {raw.strip()!r}: {exc}", line, key) from exc


def parse_config_text(text: str, strict: bool = True, source: str = "<string>") -> RunConfig:
    values = {k: s.default for k, s in SCHEMA.items()}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key or " " in key:
            raise ConfigError(f"expected 'section.key = value' in {source}", n)
        if key not in SCHEMA:
            if strict:
                raise ConfigError("unknown key", n, key)
            warnings.warn(f"{source}: line {n}: ignoring unknown key {key!r}", stacklevel=2)
            continue
        values[key] = _convert(key, value, n, strict)
    return RunConfig(values)


def parse_config(path, strict: bool = True) -> RunConfig:
    """Read a configuration file; unknown keys raise unless ``strict=False``."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror or exc}") from exc
    return parse_config_text(text, strict, str(p))
