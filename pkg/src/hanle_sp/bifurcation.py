"""Threshold, branch and hysteresis analysis of the spontaneous-polarization subsystem."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core_types import FieldVector, ModelRates, SpinState, omega_from_field
from .dynamics import (
    DynamicsConfig,
    EquilibriumSet,
    IntegratorSettings,
    Trajectory,
    detected_signal,
    integrate,
    integrate_segment,
    steady_state_full,
)

_RATE_CONTROLS = ("chi", "eta", "alpha", "gamma1", "gamma2", "xi")
_FIELD_CONTROLS = ("b_x", "b_y")


class UnboundedGrowthError(ValueError):
    """Above threshold without saturation the orientation grows without bound."""


def threshold_check(rates: ModelRates) -> bool:
    """True when the gain exceeds the orientation relaxation (strictly)."""
    return rates.chi > rates.gamma1


def pitchfork_amplitude(rates: ModelRates) -> float:
    """Magnitude of the two spontaneous solutions at zero field, or 0 below threshold."""
    excess = rates.chi - rates.gamma1
    if excess <= 0:
        return 0.0
    if rates.eta == 0:
        raise UnboundedGrowthError("eta = 0 above threshold: no saturation")
    return math.sqrt(excess / rates.eta)


@dataclass
class BifurcationDiagram:
    control: str
    control_values: np.ndarray
    branches: list[EquilibriumSet]

    def stable_counts(self) -> np.ndarray:
        return np.array([len(b.stable) for b in self.branches])

    def root_counts(self) -> np.ndarray:
        return np.array([len(b) for b in self.branches])

    def fold_points(self) -> np.ndarray:
        """Control values midway between columns whose root count differs."""
        n = self.root_counts()
        idx = np.nonzero(np.diff(n))[0]
        v = self.control_values
        return 0.5 * (v[idx] + v[idx + 1])

    def rows(self):
        """Flat ``(control, a_y, a_z, p_y, p_z, stable)`` records."""
        for c, eqs in zip(self.control_values, self.branches):
            for e in eqs:
                s = e.state
                yield (float(c), s.a_y, s.a_z, s.p_y, s.p_z, e.stable)


def _apply_control(cfg: DynamicsConfig, base_field: FieldVector, name: str, value: float):
    if name in _RATE_CONTROLS:
        rates = replace(cfg.rates, **{name: value})
        if name == "gamma2":
            rates = rates.with_alignment(cfg.rates.a_x)
        return replace(cfg, rates=rates), base_field
    if name in _FIELD_CONTROLS:
        return cfg, replace(base_field, **{name: value})
    raise ValueError(f"unknown control {name!r}; expected one of {_RATE_CONTROLS + _FIELD_CONTROLS}")


def sweep_diagram(
    control: str,
    value_range: tuple[float, float],
    steps: int,
    cfg: DynamicsConfig,
    field: FieldVector = FieldVector(),
    settings: IntegratorSettings | None = None,
) -> BifurcationDiagram:
    """Natural-parameter continuation of all equilibria over ``control``.

    ``control`` names a rate (``chi``, ``alpha`` ...) or a field component
    (``b_x``, ``b_y`` in nT). Each column is warm-started from the previous
    one; a failed column is recorded with its diagnostic and the sweep goes on.
    """
    lo, hi = map(float, value_range)
    if lo == hi:
        values = np.array([lo])
    else:
        if steps < 2:
            raise ValueError("steps must be >= 2")
        values = np.linspace(lo, hi, steps)
    branches: list[EquilibriumSet] = []
    previous: list[SpinState] = []
    for v in values:
        c, f = _apply_control(cfg, field, control, float(v))
        eqs = steady_state_full(omega_from_field(f, c.rates), c, settings, extra_seeds=previous)
        branches.append(eqs)
        if len(eqs):
            previous = [e.state for e in eqs]
    return BifurcationDiagram(control, values, branches)


@dataclass(frozen=True)
class FieldRamp:
    """Straight-line field sweep from ``start`` to ``stop`` (nT).

    ``control_start``/``control_stop`` label the sweep coordinate reported in
    traces (the ramped component for line ramps, the signed radius for ramps
    through the origin). ``rate`` is in nT/s along the segment; ``None`` picks
    a sweep lasting 1e3 orientation relaxation times.
    """

    start: FieldVector
    stop: FieldVector
    control_start: float
    control_stop: float
    control_name: str = "b_x"
    rate: float | None = None
    n_samples: int = 201
    settle_time: float | None = None

    @classmethod
    def line(cls, component: str, start: float, stop: float, fixed: FieldVector = FieldVector(), **kw):
        if component not in _FIELD_CONTROLS:
            raise ValueError("line ramps sweep b_x or b_y")
        return cls(
            replace(fixed, **{component: start}),
            replace(fixed, **{component: stop}),
            start,
            stop,
            component,
            **kw,
        )

    @classmethod
    def through_origin(cls, angle_deg: float, radius: float, **kw):
        """Ramp from ``radius * (cos, sin)`` through zero to the opposite edge."""
        c, s = math.cos(math.radians(angle_deg)), math.sin(math.radians(angle_deg))
        return cls(
            FieldVector(radius * c, radius * s),
            FieldVector(-radius * c, -radius * s),
            radius,
            -radius,
            "r",
            **kw,
        )

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.stop.as_array() - self.start.as_array()))

    def reversed(self) -> "FieldRamp":
        return replace(
            self, start=self.stop, stop=self.start,
            control_start=self.control_stop, control_stop=self.control_start,
        )

    def duration(self, rates: ModelRates) -> float:
        if self.rate is None:
            return 1e3 / rates.gamma1
        if not self.rate > 0:
            raise ValueError("ramp rate must be positive")
        return self.length / self.rate

    def controls(self) -> np.ndarray:
        return np.linspace(self.control_start, self.control_stop, self.n_samples)


@dataclass
class RampTrace:
    control: np.ndarray
    signal: np.ndarray
    states: np.ndarray  # (n, 4)
    valid: bool = True

    @property
    def p_z(self) -> np.ndarray:
        return self.states[:, 3]


def default_settle_time(rates: ModelRates) -> float:
    return 20.0 / rates.gamma1 + 20.0 / rates.gamma2


def run_ramp(
    ramp: FieldRamp,
    cfg: DynamicsConfig,
    settings: IntegratorSettings = IntegratorSettings(),
    initial: SpinState | None = None,
    settle: bool = True,
) -> tuple[RampTrace, Trajectory]:
    """Integrate along ``ramp``; optionally hold the start field first."""
    rates = cfg.rates
    if initial is None:
        initial = SpinState(p_z=1e-6 * (1 if ramp.start.b_y >= 0 else -1))
    w_start = omega_from_field(ramp.start, rates)
    w_stop = omega_from_field(ramp.stop, rates)
    if settle:
        hold = default_settle_time(rates) if ramp.settle_time is None else ramp.settle_time
        if hold > 0:
            pre = integrate(initial, (w_start.x, w_start.y, 0.0), cfg, settings, t_end=hold)
            initial = pre.final_state
    traj = integrate_segment(
        initial, (w_start.x, w_start.y), (w_stop.x, w_stop.y),
        ramp.duration(rates), ramp.n_samples, cfg, settings,
    )
    n = len(traj.t)
    control = ramp.controls()[:n]
    trace = RampTrace(control, detected_signal(traj.y, rates), traj.y, traj.success and n == ramp.n_samples)
    return trace, traj


def branch_switches(control: np.ndarray, p_z: np.ndarray, threshold: float) -> list[float]:
    """Control values where ``p_z`` crosses zero and then settles beyond ``threshold``."""
    switches = []
    current = 0
    last_zero = None
    for i in range(len(p_z)):
        if i > 0 and np.sign(p_z[i]) != np.sign(p_z[i - 1]) and p_z[i - 1] != 0:
            a, b = p_z[i - 1], p_z[i]
            last_zero = control[i - 1] + (control[i] - control[i - 1]) * a / (a - b)
        if abs(p_z[i]) > threshold:
            s = int(np.sign(p_z[i]))
            if current and s != current and last_zero is not None:
                switches.append(float(last_zero))
            current = s
    return switches


def _intervals(control: np.ndarray, mask: np.ndarray) -> list[tuple[float, float]]:
    out = []
    i = 0
    while i < len(mask):
        if mask[i]:
            j = i
            while j + 1 < len(mask) and mask[j + 1]:
                j += 1
            if j > i:
                out.append((float(control[i]), float(control[j])))
            i = j + 1
        else:
            i += 1
    return out


def _one_sample_change(*traces: np.ndarray) -> np.ndarray:
    """Largest signal change between each sample and its neighbours.

    A sweep that lags by less than one sample cannot be told apart from the
    reverse sweep, so this sets the resolution floor of the comparison.
    """
    n = len(traces[0])
    out = np.zeros(n)
    if n < 2:
        return out
    for y in traces:
        step = np.abs(np.diff(y))
        out[:-1] = np.maximum(out[:-1], step)
        out[1:] = np.maximum(out[1:], step)
    return out


@dataclass
class HysteresisReport:
    forward: RampTrace
    backward: RampTrace  # stored in its own sweep order
    loop_area: float
    switch_points: dict[str, list[float]]
    bistable: bool
    inverted_intervals: list[tuple[float, float]] = field(default_factory=list)
    differing_intervals: list[tuple[float, float]] = field(default_factory=list)
    rms_difference: float = 0.0
    valid: bool = True
    diagnostic: str = ""

    def aligned_backward_signal(self) -> np.ndarray:
        """Backward signal re-ordered onto the forward control grid."""
        return self.backward.signal[::-1]


def hysteresis_scan(
    ramp: FieldRamp,
    cfg: DynamicsConfig,
    settings: IntegratorSettings = IntegratorSettings(),
    initial: SpinState | None = None,
    deadband: float = 0.1,
    rel_tol: float = 0.02,
) -> HysteresisReport:
    """Forward sweep, then the reversed sweep from the forward end state.

    The report is ``bistable`` when the signals differ on two or more
    consecutive samples by more than ``rel_tol`` of their peak plus the local
    one-sample change of either trace, or when the sweeps sit on opposite
    branches somewhere. Branch switches use
    the deadband ``deadband * pitchfork_amplitude`` (or of the peak ``|p_z|``
    below threshold). ``inverted_intervals`` lists control ranges where the
    two sweeps sit on opposite-sign ``p_z`` branches, both beyond the deadband.
    """
    fwd, traj_f = run_ramp(ramp, cfg, settings, initial)
    bwd, traj_b = run_ramp(ramp.reversed(), cfg, settings, traj_f.final_state, settle=False)
    valid = fwd.valid and bwd.valid
    diag = "" if valid else (traj_f.message or traj_b.message or "integration failed")
    n = min(len(fwd.control), len(bwd.control))
    s_f = fwd.signal[:n]
    s_b = bwd.signal[::-1][-n:] if valid else np.full(n, np.nan)
    p_f = fwd.p_z[:n]
    p_b = bwd.p_z[::-1][-n:] if valid else np.full(n, np.nan)
    control = fwd.control[:n]

    amp = pitchfork_amplitude(cfg.rates) if cfg.saturation > 0 else 0.0
    peak_p = float(np.nanmax(np.abs(np.concatenate([p_f, p_b])))) if n else 0.0
    thr = deadband * (amp if amp > 0 else peak_p)
    switches = {
        "forward": branch_switches(fwd.control, fwd.p_z, thr),
        "backward": branch_switches(bwd.control, bwd.p_z, thr),
    }
    diff = np.abs(s_f - s_b)
    peak_s = float(np.nanmax(np.abs(np.concatenate([s_f, s_b])))) if n else 0.0
    tol = max(rel_tol * peak_s, 1e-12) + _one_sample_change(s_f, s_b)
    differing = _intervals(control, diff > tol) if valid else []
    inverted = (
        _intervals(control, (np.sign(p_f) != np.sign(p_b)) & (np.abs(p_f) > thr) & (np.abs(p_b) > thr))
        if valid and thr > 0
        else []
    )
    area = float(abs(np.trapezoid(diff, control))) if valid and n > 1 else float("nan")
    rms = float(np.sqrt(np.mean(diff**2))) if valid and n else float("nan")
    bistable = bool(differing) or bool(inverted)
    return HysteresisReport(fwd, bwd, area, switches, bistable, inverted, differing, rms, valid, diag)


def memory_hold(
    state: SpinState,
    field: FieldVector,
    cfg: DynamicsConfig,
    duration: float,
    settings: IntegratorSettings = IntegratorSettings(),
    n_samples: int = 101,
) -> Trajectory:
    """Hold the field fixed for ``duration`` starting from ``state``."""
    w = omega_from_field(field, cfg.rates)
    return integrate(state, (w.x, w.y, 0.0), cfg, settings, t_eval=np.linspace(0, duration, n_samples))
