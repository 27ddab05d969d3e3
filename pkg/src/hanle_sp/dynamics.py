"""Nonlinear alignment/orientation dynamics near zero field.

State vector ordering is ``(a_y, a_z, p_y, p_z)``. The field along the beam
(``omega_z``) is not part of the model and is dropped with a warning.

Variants
--------
SP
    Spontaneous-polarization gain ``chi`` and cubic saturation ``eta`` act on
    ``p_z``.
AOC
    Gain and saturation are off; ``a_z`` loses ``aoc_alpha * a_z``.
BOTH
    Both mechanisms active.

In every variant ``p_z`` is seeded by ``alpha * a_z``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core_types import ModelRates, Omega, SpinState


class Variant(str, enum.Enum):
    SP = "SP"
    AOC = "AOC"
    BOTH = "BOTH"


class ThresholdSingularityError(ZeroDivisionError):
    """Linear response is singular at the self-sustaining threshold."""


@dataclass(frozen=True)
class DynamicsConfig:
    rates: ModelRates
    aoc_alpha: float = 0.0
    variant: Variant = Variant.SP

    def __post_init__(self) -> None:
        if not (math.isfinite(self.aoc_alpha) and self.aoc_alpha >= 0):
            raise ValueError("aoc_alpha must be finite and non-negative")
        object.__setattr__(self, "variant", Variant(self.variant))

    @classmethod
    def aoc(cls, rates: ModelRates) -> "DynamicsConfig":
        """AOC variant with the dissipative coefficient equal to the seeding ``alpha``."""
        return cls(rates, aoc_alpha=rates.alpha, variant=Variant.AOC)

    @property
    def gain(self) -> float:
        return self.rates.chi if self.variant is not Variant.AOC else 0.0

    @property
    def saturation(self) -> float:
        return self.rates.eta if self.variant is not Variant.AOC else 0.0

    @property
    def extra_damping(self) -> float:
        return self.aoc_alpha if self.variant is not Variant.SP else 0.0


@dataclass(frozen=True)
class IntegratorSettings:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = math.inf
    max_time: float = 1e4
    convergence_eps: float = 1e-9
    method: str = "adaptive"  # or "fixed" (classical RK4 with step max_step)

    def __post_init__(self) -> None:
        for name in ("rel_tol", "abs_tol", "max_step", "max_time", "convergence_eps"):
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.method not in ("adaptive", "fixed"):
            raise ValueError("method must be 'adaptive' or 'fixed'")
        if self.method == "fixed" and not math.isfinite(self.max_step):
            raise ValueError("fixed-step integration needs a finite max_step")


def _params(cfg: DynamicsConfig):
    r = cfg.rates
    return (r.gamma1, r.gamma2, cfg.gain, cfg.saturation, r.alpha, r.a_x, cfg.extra_damping)


def _omega_xy(omega) -> tuple[float, float]:
    wx, wy, *rest = tuple(omega)
    if rest and rest[0] != 0:
        warnings.warn("omega_z is ignored by the dynamics model", stacklevel=3)
    return float(wx), float(wy)


def _rhs_array(y, wx, wy, p):
    g1, g2, chi, eta, alpha, a_x, damp = p
    a_y, a_z, p_y, p_z = y
    return np.array(
        [
            wx * a_z - g2 * a_y,
            wy * a_x - wx * a_y - (g2 + damp) * a_z,
            wx * p_z - g1 * p_y,
            -wx * p_y + (chi - g1) * p_z - eta * p_z**3 + alpha * a_z,
        ]
    )


def _jacobian_array(y, wx, p):
    g1, g2, chi, eta, alpha, _, damp = p
    p_z = y[3]
    return np.array(
        [
            [-g2, wx, 0.0, 0.0],
            [-wx, -(g2 + damp), 0.0, 0.0],
            [0.0, 0.0, -g1, wx],
            [0.0, alpha, -wx, chi - g1 - 3.0 * eta * p_z * p_z],
        ]
    )


def rhs(state: SpinState, omega, cfg: DynamicsConfig) -> SpinState:
    """Time derivative of ``state``, returned as a :class:`SpinState`."""
    wx, wy = _omega_xy(omega)
    return SpinState.from_array(_rhs_array(state.as_array(), wx, wy, _params(cfg)))


def jacobian(state: SpinState, omega, cfg: DynamicsConfig) -> np.ndarray:
    wx, _ = _omega_xy(omega)
    return _jacobian_array(state.as_array(), wx, _params(cfg))


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # (n, 4)
    success: bool = True
    reached_steady: bool = False
    message: str = ""

    @property
    def final_state(self) -> SpinState:
        return SpinState.from_array(self.y[-1])

    def states(self) -> list[SpinState]:
        return [SpinState.from_array(row) for row in self.y]


def _rk4(f, y0, t_grid, dt):
    """Classical RK4 onto ``t_grid``; each interval is split into equal substeps <= dt."""
    ys = [np.array(y0, float)]
    y = ys[0]
    for t0, t1 in zip(t_grid[:-1], t_grid[1:]):
        n = max(1, int(math.ceil((t1 - t0) / dt - 1e-12)))
        h = (t1 - t0) / n
        t = t0
        for _ in range(n):
            k1 = f(t, y)
            k2 = f(t + h / 2, y + h / 2 * k1)
            k3 = f(t + h / 2, y + h / 2 * k2)
            k4 = f(t + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t = t + h
        if not np.all(np.isfinite(y)):
            return np.array(ys), False
        ys.append(y)
    return np.array(ys), True


def integrate(
    initial: SpinState,
    omega: Sequence[float] | Omega | Callable[[float], Sequence[float]],
    cfg: DynamicsConfig,
    settings: IntegratorSettings = IntegratorSettings(),
    t_end: float | None = None,
    t_eval: np.ndarray | None = None,
) -> Trajectory:
    """Integrate the dynamics from ``initial``.

    ``omega`` is either a constant triple or a callable ``t -> (wx, wy, wz)``.
    With a constant field and no ``t_end``/``t_eval`` the run stops as soon as
    the derivative norm drops below ``settings.convergence_eps`` (or at
    ``settings.max_time``). Failures are reported on the returned trajectory,
    which ends at the last good state.
    """
    p = _params(cfg)
    y0 = initial.as_array()
    if callable(omega):
        w0 = omega(0.0)
        _omega_xy(w0)

        def f(t, y):
            w = omega(t)
            return _rhs_array(y, w[0], w[1], p)

        def final_norm(t, y):
            w = omega(t)
            return float(np.linalg.norm(_rhs_array(y, w[0], w[1], p)))

        if t_end is None and t_eval is None:
            raise ValueError("a time-dependent field needs t_end or t_eval")
        to_steady = False
    else:
        wx, wy = _omega_xy(omega)

        def f(t, y):
            return _rhs_array(y, wx, wy, p)

        def final_norm(t, y):
            return float(np.linalg.norm(_rhs_array(y, wx, wy, p)))

        to_steady = t_end is None and t_eval is None

    if t_eval is not None:
        t_eval = np.asarray(t_eval, float)
        t_end = float(t_eval[-1])
    elif t_end is None:
        t_end = settings.max_time
    t_end = float(t_end)

    if to_steady and final_norm(0.0, y0) < settings.convergence_eps:
        return Trajectory(np.array([0.0]), y0[None, :], True, True, "initial state is stationary")

    if settings.method == "fixed":
        if to_steady:
            # march in blocks until stationary
            dt = settings.max_step
            block = max(dt, min(t_end, 1.0 / max(p[0], 1e-300)))
            ts, ys = [0.0], [y0]
            t, y = 0.0, y0
            ok, steady = True, False
            while t < t_end - 1e-15:
                t_next = min(t + block, t_end)
                seg, ok = _rk4(f, y, np.array([t, t_next]), dt)
                if not ok:
                    break
                t, y = t_next, seg[-1]
                ts.append(t)
                ys.append(y)
                if final_norm(t, y) < settings.convergence_eps:
                    steady = True
                    break
            msg = "" if ok else "non-finite state"
            return Trajectory(np.array(ts), np.array(ys), ok, steady, msg)
        grid = t_eval if t_eval is not None else np.array([0.0, t_end])
        if grid[0] != 0.0:
            grid = np.concatenate([[0.0], grid])
            ys, ok = _rk4(f, y0, grid, settings.max_step)
            ys = ys[1:]
            grid = grid[1 : 1 + len(ys)]
        else:
            ys, ok = _rk4(f, y0, grid, settings.max_step)
            grid = grid[: len(ys)]
        steady = ok and final_norm(grid[-1], ys[-1]) < settings.convergence_eps
        return Trajectory(grid, ys, ok, steady, "" if ok else "non-finite state")

    if callable(omega):
        def g(t, y):
            w = omega(t)
            return _rhs_tuple(y, w[0], w[1], p)
    else:
        def g(t, y):
            return _rhs_tuple(y, wx, wy, p)

    eps2 = settings.convergence_eps**2
    stop = (lambda k: k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + k[3] * k[3] < eps2) if to_steady else None
    with np.errstate(over="ignore", invalid="ignore"):  # blow-ups are rejected steps, reported below
        t, y, success, message = _dopri54(
            g, tuple(float(v) for v in y0), t_end, t_eval, settings.rel_tol, settings.abs_tol, settings.max_step, stop
        )
    t, y = np.array(t), np.array(y).reshape(-1, 4)
    steady = success and final_norm(t[-1], y[-1]) < settings.convergence_eps * (1 + 1e-6)
    return Trajectory(t, y, success, steady, message)


def _rhs_tuple(y, wx, wy, p):
    g1, g2, chi, eta, alpha, a_x, damp = p
    a_y, a_z, p_y, p_z = y
    return (
        wx * a_z - g2 * a_y,
        wy * a_x - wx * a_y - (g2 + damp) * a_z,
        wx * p_z - g1 * p_y,
        -wx * p_y + (chi - g1) * p_z - eta * p_z * p_z * p_z + alpha * a_z,
    )


# Dormand-Prince 5(4) tableau; E holds the 5th minus 4th order weights.
_C = (0.2, 0.3, 0.8, 8 / 9, 1.0)
_A21 = 0.2
_A3 = (3 / 40, 9 / 40)
_A4 = (44 / 45, -56 / 15, 32 / 9)
_A5 = (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729)
_A6 = (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
_B = (35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)  # weights of k1, k3, k4, k5, k6
_E = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)  # k1, k3..k7

_SAFETY = 0.9
_BETA = 0.04  # PI memory term
_EXPO = 0.2 - 0.75 * _BETA
_FAC_MIN, _FAC_MAX = 0.2, 10.0  # step ratio bounds 1/10 .. 5 expressed as divisors


def _initial_step(f, t, y, k, rtol, atol):
    sc = [atol + rtol * abs(v) for v in y]
    d0 = math.sqrt(sum((v / s) ** 2 for v, s in zip(y, sc)) / 4)
    d1 = math.sqrt(sum((v / s) ** 2 for v, s in zip(k, sc)) / 4)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    k2 = f(t + h0, tuple(v + h0 * dv for v, dv in zip(y, k)))
    d2 = math.sqrt(sum(((a - b) / s) ** 2 for a, b, s in zip(k2, k, sc)) / 4) / h0
    h1 = max(1e-6, h0 * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def _dopri54(f, y0, t_end, t_eval, rtol, atol, max_step, stop):
    """Adaptive Dormand-Prince 5(4) with PI step-size control.

    Steps are shortened to land exactly on every ``t_eval`` point; without
    ``t_eval`` every accepted step is recorded. ``stop(k)`` is evaluated on
    the derivative at each accepted point (free through FSAL) and ends the
    run early when true. Returns ``(times, states, success, message)``.
    """
    t, y = 0.0, y0
    k1 = f(t, y)
    if t_eval is None:
        outputs, ts, ys = None, [t], [y]
    else:
        outputs = [float(v) for v in t_eval]
        ts, ys = ([t], [y]) if outputs[0] == 0.0 else ([], [])
        outputs = [v for v in outputs if v > 0.0]
        if not outputs:
            return ts, ys, True, ""
    if stop is not None and stop(k1):
        return ts or [t], ys or [y], True, ""
    h = min(_initial_step(f, t, y, k1, rtol, atol), max_step)
    fac_old = 1e-4
    rejected = False
    i_out = 0
    c2, c3, c4, c5, _ = _C
    a31, a32 = _A3
    a41, a42, a43 = _A4
    a51, a52, a53, a54 = _A5
    a61, a62, a63, a64, a65 = _A6
    b1, b3, b4, b5, b6 = _B
    e1, e3, e4, e5, e6, e7 = _E
    r = range(4)
    while t < t_end:
        target = outputs[i_out] if outputs is not None else t_end
        h_try = min(h, max_step)
        landing = t + h_try >= target * (1 - 1e-14) or target - t - h_try < 1e-12 * max(1.0, abs(target))
        if landing:
            h_try = target - t
        if h_try <= 1e-14 * max(1.0, abs(t)):
            return ts, ys, False, f"step size underflow at t={t:.6g}"
        k2 = f(t + c2 * h_try, tuple(y[i] + h_try * _A21 * k1[i] for i in r))
        k3 = f(t + c3 * h_try, tuple(y[i] + h_try * (a31 * k1[i] + a32 * k2[i]) for i in r))
        k4 = f(t + c4 * h_try, tuple(y[i] + h_try * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]) for i in r))
        k5 = f(
            t + c5 * h_try,
            tuple(y[i] + h_try * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]) for i in r),
        )
        k6 = f(
            t + h_try,
            tuple(y[i] + h_try * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]) for i in r),
        )
        y1 = tuple(y[i] + h_try * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]) for i in r)
        t1 = target if landing else t + h_try
        k7 = f(t1, y1)
        err2 = 0.0
        for i in r:
            d = h_try * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(y1[i]))
            err2 += (d / sc) ** 2
        err = math.sqrt(err2 / 4)
        if not math.isfinite(err):
            h = 0.2 * h_try
            rejected = True
            continue
        fac11 = err**_EXPO
        if err <= 1.0:
            fac = min(1 / _FAC_MIN, max(1 / _FAC_MAX, fac11 / fac_old**_BETA / _SAFETY))
            h_new = h_try / fac
            if rejected:
                h_new = min(h_new, h_try)
            fac_old = max(err, 1e-4)
            rejected = False
            t, y, k1 = t1, y1, k7
            if outputs is None or landing:
                ts.append(t)
                ys.append(y)
                if landing and outputs is not None:
                    i_out += 1
                    if i_out == len(outputs):
                        break
            # a shortened landing step should not shrink the next proposal
            h = max(h_new, h) if landing else h_new
            if stop is not None and stop(k1):
                if outputs is not None and ts[-1] != t:
                    ts.append(t)
                    ys.append(y)
                break
        else:
            h = h_try / min(1 / _FAC_MIN, fac11 / _SAFETY)
            rejected = True
    return ts, ys, True, ""


def _a_z_linear(wx, wy, g2, a_x, damp):
    return g2 * wy * a_x / (g2 * (g2 + damp) + wx * wx)


def _orientation_denominator(wx, g1, chi):
    return g1 * g1 - chi * g1 + wx * wx


def steady_state_linear(omega, cfg: DynamicsConfig) -> SpinState:
    """Closed-form stationary state with the cubic saturation dropped.

    Raises
    ------
    ThresholdSingularityError
        If ``gamma1**2 - chi*gamma1 + omega_x**2`` vanishes.
    """
    wx, wy = _omega_xy(omega)
    g1, g2, chi, _, alpha, a_x, damp = _params(cfg)
    a_z = _a_z_linear(wx, wy, g2, a_x, damp)
    a_y = wx * a_z / g2
    den = _orientation_denominator(wx, g1, chi)
    if abs(den) <= 1e-14 * (g1 * g1 + wx * wx):
        raise ThresholdSingularityError(
            f"linear orientation response is singular (chi={chi}, gamma1={g1}, omega_x={wx})"
        )
    p_z = alpha * g1 * a_z / den
    p_y = wx * p_z / g1
    return SpinState(a_y, a_z, p_y, p_z)


def detected_signal(state, rates: ModelRates):
    """``a_y + xi * p_y``; accepts a :class:`SpinState` or an ``(..., 4)`` array."""
    if isinstance(state, SpinState):
        return state.a_y + rates.xi * state.p_y
    y = np.asarray(state, float)
    return y[..., 0] + rates.xi * y[..., 2]


def a_p_closed_form(
    omega,
    rates: ModelRates,
    variant: Variant | str = Variant.SP,
    aoc_alpha: float | None = None,
):
    """Linear-regime projection ``xi * p_y`` of the orientation onto the detection axis.

    For the AOC variant gain is set to zero and the dissipative coefficient
    defaults to ``rates.alpha``. Broadcasts over array-valued ``omega``.
    """
    variant = Variant(variant)
    wx = np.asarray(omega[0], float)
    wy = np.asarray(omega[1], float)
    g1, g2 = rates.gamma1, rates.gamma2
    chi = 0.0 if variant is Variant.AOC else rates.chi
    damp = 0.0
    if variant is not Variant.SP:
        damp = rates.alpha if aoc_alpha is None else aoc_alpha
    first = g2 * (g2 + damp) + wx * wx
    second = _orientation_denominator(wx, g1, chi)
    if np.any(second == 0) or np.any(first == 0):
        raise ThresholdSingularityError("singular denominator in the projected orientation")
    out = wx * wy * rates.alpha * rates.xi * g2 * rates.a_x / (first * second)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Equilibrium:
    state: SpinState
    stable: bool
    eigenvalues: np.ndarray = field(repr=False, compare=False)
    residual: float = 0.0


@dataclass
class EquilibriumSet:
    equilibria: list[Equilibrium]
    diagnostic: str = ""

    def __iter__(self):
        return iter(self.equilibria)

    def __len__(self) -> int:
        return len(self.equilibria)

    def __getitem__(self, i):
        return self.equilibria[i]

    @property
    def stable(self) -> list[Equilibrium]:
        return [e for e in self.equilibria if e.stable]

    def p_z_values(self) -> np.ndarray:
        return np.array(sorted(e.state.p_z for e in self.equilibria))


def _reduced_roots(wx, wy, p) -> list[np.ndarray]:
    """All equilibria via elimination to a cubic in p_z."""
    g1, g2, chi, eta, alpha, a_x, damp = p
    a_z = _a_z_linear(wx, wy, g2, a_x, damp)
    a_y = wx * a_z / g2
    mu = chi - g1 - wx * wx / g1
    h = alpha * a_z
    if eta > 0:
        roots = np.roots([-eta, 0.0, mu, h])
        scale = max(1.0, float(np.max(np.abs(roots))))
        pz = [r.real for r in roots if abs(r.imag) <= 1e-7 * scale]
    elif mu != 0:
        pz = [-h / mu]
    else:
        pz = []
    return [np.array([a_y, a_z, wx * z / g1, z]) for z in pz]


def _newton(y, wx, wy, p, tol, max_iter=60):
    F = _rhs_array(y, wx, wy, p)
    fn = np.linalg.norm(F)
    for _ in range(max_iter):
        if fn < tol:
            return y, fn, True
        J = _jacobian_array(y, wx, p)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -F, rcond=None)[0]
        lam = 1.0
        while lam > 1e-10:
            y_new = y + lam * step
            F_new = _rhs_array(y_new, wx, wy, p)
            fn_new = np.linalg.norm(F_new)
            if fn_new < (1 - 1e-4 * lam) * fn or fn_new < tol:
                break
            lam *= 0.5
        else:
            return y, fn, fn < tol
        y, F, fn = y_new, F_new, fn_new
    return y, fn, fn < tol


def steady_state_full(
    omega,
    cfg: DynamicsConfig,
    settings: IntegratorSettings | None = None,
    extra_seeds: Sequence[SpinState | np.ndarray] = (),
) -> EquilibriumSet:
    """Find every stationary state by damped Newton from several seeds.

    Seeds are the origin, the linear state (when defined), the symmetric
    pitchfork amplitudes, the roots of the reduced cubic and any
    ``extra_seeds``. Each root is labelled stable when all Jacobian
    eigenvalues have real part below ``1e-9 * max(gamma1, gamma2)``.
    """
    wx, wy = _omega_xy(omega)
    p = _params(cfg)
    g1, g2, chi, eta, *_ = p
    rate_scale = max(g1, g2)
    seeds: list[np.ndarray] = [np.zeros(4)]
    try:
        seeds.append(steady_state_linear((wx, wy, 0.0), cfg).as_array())
    except ThresholdSingularityError:
        pass
    if eta > 0:
        amp = math.sqrt(max(0.0, chi - g1) / eta)
        seeds += [np.array([0, 0, 0, amp]), np.array([0, 0, 0, -amp])]
    seeds += _reduced_roots(wx, wy, p)
    for s in extra_seeds:
        seeds.append(s.as_array() if isinstance(s, SpinState) else np.asarray(s, float))

    found: list[np.ndarray] = []
    residuals: list[float] = []
    failures = 0
    for seed in seeds:
        tol = 1e-13 * rate_scale * max(1.0, float(np.linalg.norm(seed)))
        y, res, ok = _newton(np.array(seed, float), wx, wy, p, tol)
        if not ok or not np.all(np.isfinite(y)):
            failures += 1
            continue
        if any(np.linalg.norm(y - z) <= 1e-8 * (1 + np.linalg.norm(z)) for z in found):
            continue
        found.append(y)
        residuals.append(float(res))

    eq = []
    for y, res in sorted(zip(found, residuals), key=lambda item: item[0][3]):
        ev = np.linalg.eigvals(_jacobian_array(y, wx, p))
        stable = bool(np.max(ev.real) <= 1e-9 * rate_scale)
        eq.append(Equilibrium(SpinState.from_array(y), stable, ev, res))
    diag = "" if eq else f"Newton failed from all {failures} seeds"
    return EquilibriumSet(eq, diag)


def integrate_segment(
    initial: SpinState,
    start: Sequence[float],
    stop: Sequence[float],
    duration: float,
    n_samples: int,
    cfg: DynamicsConfig,
    settings: IntegratorSettings = IntegratorSettings(),
) -> Trajectory:
    """Ramp omega linearly from ``start`` to ``stop`` over ``duration``.

    The trajectory is sampled at ``n_samples`` equally spaced times, the
    first being the initial state.
    """
    w0 = np.asarray(start, float)[:2]
    w1 = np.asarray(stop, float)[:2]
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if n_samples == 1 or duration <= 0:
        return Trajectory(np.array([0.0]), initial.as_array()[None, :], True, False, "")
    dw = (w1 - w0) / duration

    def omega(t):
        return w0 + dw * t

    t_eval = np.linspace(0.0, duration, n_samples)
    return integrate(initial, omega, cfg, settings, t_eval=t_eval)
