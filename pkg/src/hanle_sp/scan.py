"""Field-scanning protocols over the closed-form model or the full dynamics.

Line scans, rectangular grid maps assembled row by row, and radial maps made
of rays from the edge of a circle toward (or through) its centre.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Iterator, NamedTuple

import numpy as np

from .bifurcation import FieldRamp, run_ramp
from .core_types import FieldVector, ModelRates, ModifiedModelParams, SpinState, omega_from_field
from .dynamics import DynamicsConfig, IntegratorSettings, detected_signal, steady_state_linear
from .reference import s_b_modified, s_t_modified

THREADS_ENV = "HANLE_SP_THREADS"


class ScanKind(str, enum.Enum):
    LINE_X = "LINE_X"
    LINE_Y = "LINE_Y"
    GRID_XY = "GRID_XY"
    RADIAL = "RADIAL"


class Engine(str, enum.Enum):
    CLOSED_FORM = "CLOSED_FORM"
    ODE = "ODE"


class Direction(str, enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass(frozen=True)
class ScanProtocol:
    """Description of one scanning experiment.

    Parameters
    ----------
    kind : ScanKind
    sweep_range : (lo, hi)
        Swept interval in nT (b_x for LINE_X and GRID_XY rows, b_y for LINE_Y).
    fixed : FieldVector
        Values of the components that are not swept.
    n_points : int
        Samples per line or per ray.
    sweep_rate : float or None
        Ramp rate in nT/s for the ODE engine. ``None`` stretches each sweep
        over 1e3 orientation relaxation times.
    y_range, n_rows
        Row positions of a GRID_XY map.
    radius, angle_step, through_center, semicircle
        RADIAL geometry; angles in degrees.
    smoothing_width : int
        Odd width of the optional centred moving average (1 = off).
    seed : float
        Magnitude of the ``p_z`` seed at the start of each ODE line, signed
        like the starting ``b_y``.
    carry_over : bool
        Keep the ODE state between grid rows instead of re-preparing it.
    """

    kind: ScanKind = ScanKind.LINE_X
    sweep_range: tuple[float, float] = (-1.0, 1.0)
    fixed: FieldVector = FieldVector()
    n_points: int = 201
    sweep_rate: float | None = None
    direction: Direction = Direction.FORWARD
    engine: Engine = Engine.CLOSED_FORM
    y_range: tuple[float, float] = (-1.0, 1.0)
    n_rows: int = 21
    radius: float = 1.0
    angle_step: float = 5.0
    through_center: bool = False
    semicircle: bool = False
    smoothing_width: int = 1
    seed: float = 1e-6
    carry_over: bool = False

    def __post_init__(self) -> None:
        for name, cls in (("kind", ScanKind), ("direction", Direction), ("engine", Engine)):
            object.__setattr__(self, name, cls(getattr(self, name)))
        object.__setattr__(self, "sweep_range", tuple(float(v) for v in self.sweep_range))
        object.__setattr__(self, "y_range", tuple(float(v) for v in self.y_range))
        lo, hi = self.sweep_range
        if self.kind is not ScanKind.RADIAL:
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo == hi:
                raise ValueError("sweep_range must be finite and nonzero")
        if self.n_points < 1 or self.n_rows < 1:
            raise ValueError("n_points and n_rows must be >= 1")
        if self.sweep_rate is not None and not self.sweep_rate > 0:
            raise ValueError("sweep_rate must be positive")
        if self.smoothing_width < 1 or self.smoothing_width % 2 == 0:
            raise ValueError("smoothing_width must be a positive odd integer")
        if self.kind is ScanKind.RADIAL:
            if not self.radius > 0:
                raise ValueError("radius must be positive")
            if not self.angle_step > 0:
                raise ValueError("angle_step must be positive")
            span = 180.0 if self.semicircle else 360.0
            n = span / self.angle_step
            if abs(n - round(n)) > 1e-9:
                raise ValueError(f"angle_step must divide {span:g} degrees")

    def angles(self) -> np.ndarray:
        span = 180.0 if self.semicircle else 360.0
        return np.arange(int(round(span / self.angle_step))) * self.angle_step

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for k in ("kind", "direction", "engine"):
            d[k] = getattr(self, k).value
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScanProtocol":
        data = dict(data)
        if isinstance(data.get("fixed"), dict):
            data["fixed"] = FieldVector(**data["fixed"])
        return cls(**data)


class Sample(NamedTuple):
    field: FieldVector
    s_b: float
    s_t: float | None
    state: SpinState | None


@dataclass
class ScanTrace:
    """One line or ray in sweep order.

    ``coordinate`` is the swept value (b_x, b_y, or signed distance from the
    centre along a ray). ``s_t`` and ``states`` are ``None`` when the engine
    does not provide them. ``times`` holds simulated time for the ODE engine.
    """

    coordinate: np.ndarray
    fields: np.ndarray  # (n, 3) nT
    s_b: np.ndarray
    s_t: np.ndarray | None = None
    states: np.ndarray | None = None
    times: np.ndarray | None = None
    metadata: dict[str, Any] = field(default_factory=dict)
    complete: bool = True
    diagnostic: str = ""

    def __len__(self) -> int:
        return len(self.coordinate)

    def samples(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield Sample(
                FieldVector(*map(float, self.fields[i])),
                float(self.s_b[i]),
                None if self.s_t is None else float(self.s_t[i]),
                None if self.states is None else SpinState.from_array(self.states[i]),
            )

    def channel(self, name: str) -> np.ndarray:
        values = getattr(self, name)
        if values is None:
            raise ValueError(f"trace has no {name} channel")
        return values


@dataclass
class SignalMap:
    """Signals on a rectangular ``(b_x, b_y)`` lattice; rows index ``b_y``.

    Missing nodes are NaN and reported by :attr:`missing`, never filled in.
    """

    b_x: np.ndarray
    b_y: np.ndarray
    s_b: np.ndarray
    s_t: np.ndarray | None = None
    provenance: list[dict[str, Any]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.b_x = np.asarray(self.b_x, float)
        self.b_y = np.asarray(self.b_y, float)
        self.s_b = np.asarray(self.s_b, float)
        shape = (len(self.b_y), len(self.b_x))
        if self.s_b.shape != shape:
            raise ValueError(f"s_b shape {self.s_b.shape} does not match grid {shape}")
        if self.s_t is not None:
            self.s_t = np.asarray(self.s_t, float)
            if self.s_t.shape != shape:
                raise ValueError("s_t shape does not match grid")

    @property
    def shape(self) -> tuple[int, int]:
        return self.s_b.shape

    @property
    def missing(self) -> np.ndarray:
        m = ~np.isfinite(self.s_b)
        if self.s_t is not None:
            m |= ~np.isfinite(self.s_t)
        return m

    @property
    def complete(self) -> bool:
        return not self.missing.any()

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.b_x, self.b_y)

    def row(self, i: int) -> ScanTrace:
        fields = np.column_stack([self.b_x, np.full_like(self.b_x, self.b_y[i]), np.zeros_like(self.b_x)])
        return ScanTrace(
            self.b_x.copy(), fields, self.s_b[i].copy(),
            None if self.s_t is None else self.s_t[i].copy(),
        )

    def column(self, j: int) -> ScanTrace:
        fields = np.column_stack([np.full_like(self.b_y, self.b_x[j]), self.b_y, np.zeros_like(self.b_y)])
        return ScanTrace(
            self.b_y.copy(), fields, self.s_b[:, j].copy(),
            None if self.s_t is None else self.s_t[:, j].copy(),
        )


def moving_average(values: np.ndarray, width: int) -> np.ndarray:
    """Centred moving average; windows shrink symmetrically at the ends."""
    if width < 1 or width % 2 == 0:
        raise ValueError("width must be a positive odd integer")
    values = np.asarray(values, float)
    if width == 1 or len(values) == 0:
        return values.copy()
    half = width // 2
    csum = np.concatenate([[0.0], np.cumsum(values)])
    n = len(values)
    out = np.empty(n)
    for i in range(n):
        h = min(half, i, n - 1 - i)
        out[i] = (csum[i + h + 1] - csum[i - h]) / (2 * h + 1)
    return out


def worker_count() -> int:
    """Worker processes for independent rows and rays, from ``HANLE_SP_THREADS``."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, n)


def quasi_static_signal(fields: np.ndarray, cfg: DynamicsConfig) -> np.ndarray:
    """Detected signal of the linear steady state at each field (nT rows)."""
    out = np.empty(len(fields))
    for i, b in enumerate(fields):
        w = omega_from_field(FieldVector(*b), cfg.rates)
        out[i] = detected_signal(steady_state_linear((w.x, w.y, 0.0), cfg), cfg.rates)
    return out


def _as_modified(model) -> ModifiedModelParams:
    if isinstance(model, ModifiedModelParams):
        return model
    if isinstance(model, ModelRates):
        return ModifiedModelParams(model)
    if isinstance(model, DynamicsConfig):
        return ModifiedModelParams(model.rates)
    raise TypeError("closed-form engine needs ModifiedModelParams or ModelRates")


def _as_dynamics(model) -> DynamicsConfig:
    if isinstance(model, DynamicsConfig):
        return model
    if isinstance(model, ModelRates):
        return DynamicsConfig(model)
    raise TypeError("ODE engine needs a DynamicsConfig or ModelRates")


def _closed_trace(coord, fields, model, meta) -> ScanTrace:
    params = _as_modified(model)
    triple = (fields[:, 0], fields[:, 1], fields[:, 2])
    s_b = np.atleast_1d(np.asarray(s_b_modified(triple, params), float))
    s_t = np.atleast_1d(np.asarray(s_t_modified(triple, params), float))
    return ScanTrace(coord, fields, s_b, s_t, metadata=meta)


def _ode_trace(coord, fields, model, protocol, settings, initial=None) -> ScanTrace:
    cfg = _as_dynamics(model)
    start, stop = FieldVector(*fields[0]), FieldVector(*fields[-1])
    if initial is None:
        sign = -1.0 if start.b_y < 0 else 1.0
        initial = SpinState(p_z=sign * protocol.seed)
    ramp = FieldRamp(
        start, stop, float(coord[0]), float(coord[-1]), "s",
        rate=protocol.sweep_rate, n_samples=len(coord),
    )
    if len(coord) == 1:
        ramp = replace(ramp, n_samples=1)
    trace, traj = run_ramp(ramp, cfg, settings, initial)
    n = len(trace.signal)
    meta = {"sweep_duration": ramp.duration(cfg.rates) if len(coord) > 1 else 0.0}
    return ScanTrace(
        coord[:n], fields[:n], trace.signal, None, traj.y, traj.t, meta,
        complete=trace.valid, diagnostic="" if trace.valid else (traj.message or "integration failed"),
    )


def _line_geometry(protocol: ScanProtocol, fixed: FieldVector | None = None):
    fixed = protocol.fixed if fixed is None else fixed
    lo, hi = protocol.sweep_range
    coord = np.linspace(lo, hi, protocol.n_points)
    if protocol.direction is Direction.BACKWARD:
        coord = coord[::-1]
    fields = np.tile(fixed.as_array(), (len(coord), 1))
    axis = 1 if protocol.kind is ScanKind.LINE_Y else 0
    fields[:, axis] = coord
    return coord, fields


def _finish(trace: ScanTrace, protocol: ScanProtocol, extra: dict[str, Any]) -> ScanTrace:
    meta = {"protocol": protocol.to_dict(), "engine": protocol.engine.value, **extra, **trace.metadata}
    if protocol.smoothing_width > 1:
        trace.s_b = moving_average(trace.s_b, protocol.smoothing_width)
        if trace.s_t is not None:
            trace.s_t = moving_average(trace.s_t, protocol.smoothing_width)
        meta["smoothing"] = {"kind": "moving_average", "width": protocol.smoothing_width}
    trace.metadata = meta
    return trace


def run_line_scan(
    protocol: ScanProtocol,
    model,
    settings: IntegratorSettings = IntegratorSettings(),
    initial: SpinState | None = None,
    fixed: FieldVector | None = None,
) -> ScanTrace:
    """Sweep one field component; samples are returned in sweep order.

    The closed-form engine takes :class:`ModifiedModelParams` (or bare
    :class:`ModelRates`); the ODE engine takes a :class:`DynamicsConfig` and
    keeps the state across samples.
    """
    kind = protocol.kind
    if kind not in (ScanKind.LINE_X, ScanKind.LINE_Y, ScanKind.GRID_XY):
        raise ValueError("run_line_scan needs a LINE_X or LINE_Y protocol")
    coord, fields = _line_geometry(protocol, fixed)
    if protocol.engine is Engine.CLOSED_FORM:
        trace = _closed_trace(coord, fields, model, {})
    else:
        trace = _ode_trace(coord, fields, model, protocol, settings, initial)
    return _finish(trace, protocol, {"axis": "b_y" if kind is ScanKind.LINE_Y else "b_x"})


def _grid_row(args):
    protocol, model, settings, b_y, initial = args
    fixed = replace(protocol.fixed, b_y=float(b_y))
    return run_line_scan(replace(protocol, kind=ScanKind.LINE_X), model, settings, initial, fixed)


def _row_values(protocol: ScanProtocol) -> np.ndarray:
    lo, hi = protocol.y_range
    return np.array([lo]) if protocol.n_rows == 1 else np.linspace(lo, hi, protocol.n_rows)


def run_grid_map(
    protocol: ScanProtocol,
    model,
    settings: IntegratorSettings = IntegratorSettings(),
    workers: int | None = None,
) -> SignalMap:
    """Assemble a map from b_x line scans at each row ``b_y``.

    ODE rows start from the zero state plus the signed seed unless
    ``carry_over`` is set, in which case they run sequentially and each row
    starts from the previous row's final state.
    """
    if protocol.kind is not ScanKind.GRID_XY:
        raise ValueError("run_grid_map needs a GRID_XY protocol")
    rows = _row_values(protocol)
    coord, _ = _line_geometry(replace(protocol, kind=ScanKind.LINE_X))
    b_x = np.sort(coord)
    if protocol.engine is Engine.CLOSED_FORM:
        params = _as_modified(model)
        bx, by = np.meshgrid(b_x, rows)
        bz = np.full_like(bx, protocol.fixed.b_z)
        s_b = np.asarray(s_b_modified((bx, by, bz), params), float).reshape(bx.shape)
        s_t = np.asarray(s_t_modified((bx, by, bz), params), float).reshape(bx.shape)
        if protocol.smoothing_width > 1:
            s_b = np.array([moving_average(r, protocol.smoothing_width) for r in s_b])
            s_t = np.array([moving_average(r, protocol.smoothing_width) for r in s_t])
        prov = [{"protocol": protocol.to_dict(), "engine": protocol.engine.value}]
        return SignalMap(b_x, rows, s_b, s_t, prov)

    n_workers = worker_count() if workers is None else max(1, workers)
    traces: list[ScanTrace] = []
    if protocol.carry_over:
        state = None
        for b_y in rows:
            tr = _grid_row((protocol, model, settings, b_y, state))
            traces.append(tr)
            state = SpinState.from_array(tr.states[-1]) if tr.states is not None and len(tr) else None
    else:
        jobs = [(protocol, model, settings, b_y, None) for b_y in rows]
        if n_workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(n_workers) as pool:
                traces = list(pool.map(_grid_row, jobs))
        else:
            traces = [_grid_row(j) for j in jobs]
    s_b = np.full((len(rows), len(b_x)), np.nan)
    prov = []
    for i, tr in enumerate(traces):
        order = np.argsort(tr.coordinate)
        idx = np.searchsorted(b_x, tr.coordinate[order])
        s_b[i, idx] = tr.s_b[order]
        prov.append({"row": i, "b_y": float(rows[i]), "complete": tr.complete, "diagnostic": tr.diagnostic,
                     **{k: v for k, v in tr.metadata.items() if k != "protocol"}})
    prov.insert(0, {"protocol": protocol.to_dict(), "engine": protocol.engine.value})
    return SignalMap(b_x, rows, s_b, None, prov)


def _ray(args):
    protocol, model, settings, theta = args
    c, s = math.cos(math.radians(theta)), math.sin(math.radians(theta))
    r_end = -protocol.radius if protocol.through_center else 0.0
    coord = np.linspace(protocol.radius, r_end, protocol.n_points)
    fields = np.column_stack([coord * c, coord * s, np.full_like(coord, protocol.fixed.b_z)])
    if protocol.engine is Engine.CLOSED_FORM:
        trace = _closed_trace(coord, fields, model, {})
    else:
        trace = _ode_trace(coord, fields, model, protocol, settings)
    return _finish(trace, protocol, {"angle_deg": float(theta)})


def run_radial_map(
    protocol: ScanProtocol,
    model,
    settings: IntegratorSettings = IntegratorSettings(),
    workers: int | None = None,
) -> list[ScanTrace]:
    """One ray per angle, from ``radius * (cos, sin)`` to the centre.

    With ``through_center`` each ray continues to the opposite edge. The
    coordinate of each sample is its signed distance from the centre.
    """
    if protocol.kind is not ScanKind.RADIAL:
        raise ValueError("run_radial_map needs a RADIAL protocol")
    jobs = [(protocol, model, settings, float(t)) for t in protocol.angles()]
    n_workers = worker_count() if workers is None else max(1, workers)
    if protocol.engine is Engine.ODE and n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            return list(pool.map(_ray, jobs))
    return [_ray(j) for j in jobs]
