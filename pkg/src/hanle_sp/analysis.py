"""Signal-shape analysis and least-squares fitting to the corrected reference model."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from typing import Any, NamedTuple, Sequence

import numpy as np
from scipy.optimize import least_squares, minimize

from .core_types import ModifiedModelParams
from .reference import effective_b_y, s_b_modified, s_t_modified
from .scan import ScanTrace, SignalMap


class UnresolvedWidthError(ValueError):
    """The trace has no unique pair of dominant opposite-sign extrema."""


class WidthMethod(str, enum.Enum):
    EXTREMA_HALF_DISTANCE = "EXTREMA_HALF_DISTANCE"
    HALF_MAX = "HALF_MAX"


class Extremum(NamedTuple):
    position: float
    value: float
    kind: str  # "max" or "min"


def _xy(trace, channel: str):
    if isinstance(trace, ScanTrace):
        return np.asarray(trace.coordinate, float), np.asarray(trace.channel(channel), float)
    x, y = trace
    return np.asarray(x, float), np.asarray(y, float)


def _parabola_vertex(x0, x1, x2, y0, y1, y2):
    """Vertex of the parabola through three points with arbitrary spacing."""
    d0, d2 = x0 - x1, x2 - x1
    denom = d0 * d2 * (d0 - d2)
    if denom == 0:
        return x1, y1
    a = (d2 * (y0 - y1) - d0 * (y2 - y1)) / denom
    b = (d0 * d0 * (y2 - y1) - d2 * d2 * (y0 - y1)) / denom
    if a == 0:
        return x1, y1
    dx = -b / (2 * a)
    # keep the refinement inside the bracketing interval
    dx = min(max(dx, min(d0, d2)), max(d0, d2))
    return x1 + dx, y1 + b * dx + a * dx * dx


def find_extrema(trace, channel: str = "s_b") -> list[Extremum]:
    """Interior local extrema, refined by local quadratic interpolation.

    ``trace`` is a :class:`ScanTrace` or an ``(x, y)`` pair. The sample order
    may be either direction; results are sorted by position.
    """
    x, y = _xy(trace, channel)
    if len(x) < 5:
        raise ValueError("need at least 5 samples")
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    left, mid, right = y[:-2], y[1:-1], y[2:]
    is_max = (mid > left) & (mid >= right)
    is_min = (mid < left) & (mid <= right)
    idx = np.nonzero(is_max | is_min)[0] + 1
    out = []
    for i in idx:
        pos, val = _parabola_vertex(x[i - 1], x[i], x[i + 1], y[i - 1], y[i], y[i + 1])
        out.append(Extremum(float(pos), float(val), "max" if is_max[i - 1] else "min"))
    return out


def dominant_extrema(extrema: Sequence[Extremum], center: float = 0.0) -> tuple[Extremum, Extremum]:
    """Largest positive maximum and most negative minimum, sorted by position.

    Ties in magnitude go to the extremum nearer ``center``.
    """
    maxima = [e for e in extrema if e.kind == "max" and e.value > 0]
    minima = [e for e in extrema if e.kind == "min" and e.value < 0]
    if not maxima or not minima:
        raise UnresolvedWidthError("no pair of opposite-sign extrema")

    def pick(cands):
        top = max(abs(e.value) for e in cands)
        tied = [e for e in cands if abs(e.value) >= top * (1 - 1e-12)]
        return min(tied, key=lambda e: abs(e.position - center))

    pair = sorted((pick(maxima), pick(minima)), key=lambda e: e.position)
    return pair[0], pair[1]


@dataclass(frozen=True)
class WidthReport:
    axis: str
    hwhm: float
    extrema_positions: tuple[float, float]
    method: WidthMethod = WidthMethod.EXTREMA_HALF_DISTANCE

    def __post_init__(self) -> None:
        if not self.hwhm > 0:
            raise UnresolvedWidthError("width must be positive")
        object.__setattr__(self, "method", WidthMethod(self.method))


def _axis_of(trace, axis):
    if axis is not None:
        return axis
    if isinstance(trace, ScanTrace):
        a = trace.metadata.get("axis", "x")
        return a[-1] if a.startswith("b_") else a
    return "x"


def hwhm_extrema(trace, channel: str = "s_b", axis: str | None = None) -> WidthReport:
    """Half the distance between the two dominant extrema."""
    x, y = _xy(trace, channel)
    center = 0.5 * (float(np.min(x)) + float(np.max(x)))
    lo, hi = dominant_extrema(find_extrema((x, y)), center)
    width = abs(hi.position - lo.position) / 2
    return WidthReport(_axis_of(trace, axis), width, (lo.position, hi.position))


def hwhm_half_max(trace, channel: str = "s_b", axis: str | None = None) -> WidthReport:
    """Half width at half of the largest ``|signal|`` around that peak."""
    x, y = _xy(trace, channel)
    order = np.argsort(x)
    x, y = x[order], np.abs(y[order])
    i = int(np.argmax(y))
    half = y[i] / 2
    if not half > 0:
        raise UnresolvedWidthError("trace is identically zero")

    def crossing(indices):
        prev = i
        for j in indices:
            if y[j] <= half:
                t = (y[prev] - half) / (y[prev] - y[j])
                return x[prev] + t * (x[j] - x[prev])
            prev = j
        raise UnresolvedWidthError("signal does not fall to half maximum on both sides")

    left = crossing(range(i - 1, -1, -1))
    right = crossing(range(i + 1, len(x)))
    return WidthReport(_axis_of(trace, axis), (right - left) / 2, (float(left), float(right)), WidthMethod.HALF_MAX)


def signed_amplitude(x, y) -> float:
    """Half the signal step between the dominant extrema, right minus left."""
    lo, hi = dominant_extrema(find_extrema((x, y)), 0.5 * (float(np.min(x)) + float(np.max(x))))
    return (hi.value - lo.value) / 2


def normalize_amplitude(peak_signal: float, photocurrent: float, density: float) -> float:
    """Peak signal per unit photocurrent and atomic density (cm^3 for cm^-3 densities)."""
    if not photocurrent > 0 or not density > 0:
        raise ValueError("photocurrent and density must be positive")
    return peak_signal / (photocurrent * density)


# ---------------------------------------------------------------- fitting

FIT_PARAMETERS = ("gamma", "k_aniso", "b_y0", "decay_coeff")


def _softplus(u):
    return np.logaddexp(0.0, u)


def _softplus_inv(v):
    v = max(v, 1e-300)
    return v + math.log(-math.expm1(-v)) if v < 30 else v


_TRANSFORMS = {
    "gamma": (np.exp, math.log),
    "k_aniso": (np.exp, math.log),
    "b_y0": (_softplus, _softplus_inv),
    "decay_coeff": (_softplus, _softplus_inv),
}


@dataclass(frozen=True)
class FitGuess:
    """Starting point: corrected-model parameters plus per-channel amplitude scales."""

    params: ModifiedModelParams
    scale_b: float = 1.0
    scale_t: float = 1.0


@dataclass(frozen=True)
class FitOptions:
    """Knobs for :func:`fit_map`.

    ``channels`` is ``"joint"``, ``"s_b"`` or ``"s_t"``. ``free`` lists the
    model parameters to adjust; amplitude scales are always free for the
    fitted channels. ``grad_tol`` bounds the final gradient norm (relative to
    the data norm squared) for the fit to count as converged.
    """

    channels: str = "joint"
    free: tuple[str, ...] = FIT_PARAMETERS
    max_nfev: int = 2000
    ftol: float = 1e-12
    xtol: float = 1e-12
    gtol: float = 1e-12
    grad_tol: float = 1e-6
    fd_rel_step: float = 1e-6
    fd_abs_floor: float = 1e-9
    fallback: bool = True

    def __post_init__(self) -> None:
        if self.channels not in ("joint", "s_b", "s_t"):
            raise ValueError("channels must be 'joint', 's_b' or 's_t'")
        unknown = set(self.free) - set(FIT_PARAMETERS)
        if unknown:
            raise ValueError(f"unknown fit parameters {sorted(unknown)}")


@dataclass
class FitResult:
    params: ModifiedModelParams
    scale_b: float
    scale_t: float
    residual_rms: float
    iterations: int
    converged: bool
    per_param_sensitivity: dict[str, float]
    gradient_norm: float = 0.0
    method: str = "trf"
    message: str = ""

    def values(self) -> dict[str, float]:
        p = self.params
        return {
            "gamma": p.gamma,
            "k_aniso": p.k_aniso,
            "b_y0": p.b_y0,
            "decay_coeff": p.decay_coeff,
            "scale_b": self.scale_b,
            "scale_t": self.scale_t,
        }


class _Problem:
    """Maps between the native parameters and an unconstrained vector."""

    def __init__(self, guess: FitGuess, options: FitOptions):
        self.guess = guess
        self.options = options
        self.model_names = [n for n in FIT_PARAMETERS if n in options.free]
        self.scale_names = []
        if options.channels in ("joint", "s_b"):
            self.scale_names.append("scale_b")
        if options.channels in ("joint", "s_t"):
            self.scale_names.append("scale_t")

    @property
    def names(self):
        return self.model_names + self.scale_names

    def native_start(self) -> np.ndarray:
        p = self.guess.params
        vals = {"gamma": p.gamma, "k_aniso": p.k_aniso, "b_y0": p.b_y0, "decay_coeff": p.decay_coeff,
                "scale_b": self.guess.scale_b, "scale_t": self.guess.scale_t}
        return np.array([vals[n] for n in self.names], float)

    def to_free(self, native: np.ndarray) -> np.ndarray:
        out = []
        for n, v in zip(self.names, native):
            out.append(_TRANSFORMS[n][1](float(v)) if n in _TRANSFORMS else float(v))
        return np.array(out)

    def to_native(self, u: np.ndarray) -> np.ndarray:
        out = []
        for n, v in zip(self.names, u):
            out.append(float(_TRANSFORMS[n][0](v)) if n in _TRANSFORMS else float(v))
        return np.array(out)

    def build(self, native: np.ndarray) -> tuple[ModifiedModelParams, float, float]:
        vals = dict(zip(self.names, native))
        p = self.guess.params
        base = p.base
        if "gamma" in vals:
            g2 = float(vals["gamma"])
            base = replace(base, gamma2=g2, pump_rate=abs(base.a_x) * g2)
        params = replace(
            p,
            base=base,
            k_aniso=float(vals.get("k_aniso", p.k_aniso)),
            b_y0=float(vals.get("b_y0", p.b_y0)),
            decay_coeff=float(vals.get("decay_coeff", p.decay_coeff)),
        )
        return params, float(vals.get("scale_b", self.guess.scale_b)), float(vals.get("scale_t", self.guess.scale_t))


def _map_residual_fn(data: SignalMap, problem: _Problem):
    bx, by = data.mesh()
    bz = np.zeros_like(bx)
    mask = ~data.missing
    channels = problem.options.channels
    targets = []
    if channels in ("joint", "s_b"):
        targets.append(data.s_b[mask])
    if channels in ("joint", "s_t"):
        if data.s_t is None:
            raise ValueError("map has no s_t channel to fit")
        targets.append(data.s_t[mask])
    target = np.concatenate(targets)
    field_triple = (bx[mask], by[mask], bz[mask])

    def residual_native(native):
        params, sb, st = problem.build(native)
        parts = []
        if channels in ("joint", "s_b"):
            parts.append(sb * np.asarray(s_b_modified(field_triple, params)))
        if channels in ("joint", "s_t"):
            parts.append(st * np.asarray(s_t_modified(field_triple, params)))
        return np.concatenate(parts) - target

    return residual_native, target


def _fd_sensitivity(residual_native, native, names, rel, floor) -> dict[str, float]:
    """Column norms of the forward-difference Jacobian in native units."""
    r0 = residual_native(native)
    out = {}
    for i, n in enumerate(names):
        h = max(rel * abs(native[i]), floor)
        x = native.copy()
        x[i] += h
        out[n] = float(np.linalg.norm((residual_native(x) - r0) / h))
    return out


def _run_fit(residual_native, target, problem: _Problem) -> FitResult:
    opts = problem.options
    u0 = problem.to_free(problem.native_start())

    def residual_free(u):
        return residual_native(problem.to_native(u))

    data_norm2 = max(float(np.dot(target, target)), 1e-300)
    method, message = "trf", ""
    converged = False
    try:
        sol = least_squares(
            residual_free, u0, method="trf", diff_step=opts.fd_rel_step,
            ftol=opts.ftol, xtol=opts.xtol, gtol=opts.gtol, max_nfev=opts.max_nfev,
        )
        u_best, iterations, message = sol.x, int(sol.nfev), str(sol.message)
        grad = float(np.max(np.abs(sol.jac.T @ sol.fun))) if sol.fun.size else 0.0
        converged = sol.status > 0 and grad <= opts.grad_tol * data_norm2
        ok = sol.status > 0 and np.all(np.isfinite(sol.fun))
    except (ValueError, np.linalg.LinAlgError) as exc:
        u_best, iterations, message, ok, grad = u0, 0, str(exc), False, math.inf

    if not ok and opts.fallback:
        def cost(u):
            r = residual_free(u)
            v = float(np.dot(r, r))
            return v if math.isfinite(v) else math.inf

        nm = minimize(cost, u_best, method="Nelder-Mead",
                      options={"maxfev": opts.max_nfev * 5, "xatol": 1e-10, "fatol": 1e-14 * data_norm2})
        method, message = "nelder-mead", str(nm.message)
        iterations += int(nm.nfev)
        if nm.fun <= cost(u_best):
            u_best = nm.x
        # gradient check by central differences in the free coordinates
        g = np.zeros_like(u_best)
        for i in range(len(u_best)):
            h = 1e-6 * max(1.0, abs(u_best[i]))
            e = np.zeros_like(u_best)
            e[i] = h
            g[i] = (cost(u_best + e) - cost(u_best - e)) / (4 * h)
        grad = float(np.max(np.abs(g))) if len(g) else 0.0
        converged = bool(nm.success) and grad <= opts.grad_tol * data_norm2

    native = problem.to_native(u_best)
    params, sb, st = problem.build(native)
    r = residual_native(native)
    rms = float(np.sqrt(np.mean(r * r))) if r.size else 0.0
    sens = _fd_sensitivity(residual_native, native, problem.names, opts.fd_rel_step, opts.fd_abs_floor)
    return FitResult(params, sb, st, rms, iterations, bool(converged), sens, grad, method, message)


def fit_map(data: SignalMap, initial_guess: FitGuess, options: FitOptions = FitOptions()) -> FitResult:
    """Least-squares fit of a map to the corrected reference signals.

    Positive parameters are optimized through smooth positivity maps (log
    for the width and anisotropy, softplus for the field offset and decay).
    The active region of the guess is held fixed. Missing nodes raise.
    """
    if not data.complete:
        raise ValueError(f"map has {int(data.missing.sum())} missing nodes")
    if not all(math.isfinite(v) for v in (initial_guess.scale_b, initial_guess.scale_t)):
        raise ValueError("initial guess must be finite")
    problem = _Problem(initial_guess, options)
    residual_native, target = _map_residual_fn(data, problem)
    return _run_fit(residual_native, target, problem)


# ---------------------------------------------------------- amplitude curve


def amplitude_curve(b_y: np.ndarray, params: ModifiedModelParams, scale: float = 1.0) -> np.ndarray:
    """Dispersion-shaped amplitude versus ``b_y`` seen through the effective field.

    ``scale * G * w / (G**2 + w**2)`` with ``G = params.gamma`` and
    ``w = gamma_gyro * b_y_eff / k_aniso``. With ``b_y0 = 0`` this is a plain
    dispersion curve.
    """
    g = params.gamma
    w = params.base.gamma_gyro * np.asarray(effective_b_y(b_y, params), float) / params.k_aniso
    return scale * g * w / (g * g + w * w)


def fit_amplitude_curve(
    b_y: np.ndarray,
    amplitude: np.ndarray,
    initial_guess: FitGuess,
    with_b_y0: bool = True,
    options: FitOptions | None = None,
) -> FitResult:
    """Fit :func:`amplitude_curve` to measured amplitudes versus ``b_y``.

    Free parameters are the width, the scale and, if ``with_b_y0``, the field
    offset. With ``with_b_y0=False`` the offset is pinned to zero. The
    anisotropy only rescales the width here and is held at its guess.
    """
    free = ("gamma", "b_y0") if with_b_y0 else ("gamma",)
    options = replace(options or FitOptions(), channels="s_b", free=free)
    guess = initial_guess
    if not with_b_y0:
        guess = replace(guess, params=replace(guess.params, b_y0=0.0))
    problem = _Problem(guess, options)
    b_y = np.asarray(b_y, float)
    target = np.asarray(amplitude, float)

    def residual_native(native):
        params, sb, _ = problem.build(native)
        return amplitude_curve(b_y, params, sb) - target

    return _run_fit(residual_native, target, problem)


# ---------------------------------------------------------------- loci


@dataclass
class ExtremaLocus:
    """Extrema positions per quadrant, each an ``(n, 3)`` array of ``(b_x, b_y, value)``."""

    branches: dict[str, np.ndarray] = field(default_factory=dict)

    def points(self) -> np.ndarray:
        if not self.branches:
            return np.empty((0, 3))
        return np.vstack([b for b in self.branches.values() if len(b)])

    def __len__(self) -> int:
        return len(self.points())


def _quadrant(b_x: float, b_y: float) -> str:
    return ("+" if b_x >= 0 else "-") + ("+" if b_y >= 0 else "-")


def extrema_locus(data: SignalMap, channel: str = "s_b", axis: str = "x") -> ExtremaLocus:
    """Dominant extrema of every row (``axis='x'``) or column (``axis='y'``).

    Points are grouped by the quadrant of the field plane they fall in and
    ordered along the other axis. Lines without a dominant pair are skipped.
    """
    values = getattr(data, channel)
    if values is None or values.size == 0:
        return ExtremaLocus({})
    pts: dict[str, list] = {}
    lines = range(len(data.b_y)) if axis == "x" else range(len(data.b_x))
    for i in lines:
        if axis == "x":
            x, y, fixed = data.b_x, values[i], data.b_y[i]
        else:
            x, y, fixed = data.b_y, values[:, i], data.b_x[i]
        if len(x) < 5 or not np.all(np.isfinite(y)):
            continue
        try:
            pair = dominant_extrema(find_extrema((x, y)), 0.5 * (x.min() + x.max()))
        except UnresolvedWidthError:
            continue
        for e in pair:
            bx, by = (e.position, fixed) if axis == "x" else (fixed, e.position)
            pts.setdefault(_quadrant(bx, by), []).append((bx, by, e.value))
    sort_col = 1 if axis == "x" else 0
    branches = {}
    for q, v in sorted(pts.items()):
        arr = np.array(v, float)
        branches[q] = arr[np.argsort(arr[:, sort_col], kind="stable")]
    return ExtremaLocus(branches)


# ------------------------------------------------------------ width tables


def load_width_table(path) -> dict[str, np.ndarray]:
    """Read an externally supplied width-model table (CSV with a header row).

    Lines starting with ``#`` are ignored. Used only for overlays.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#")) if r]
    if not rows:
        raise ValueError(f"{path}: empty width table")
    header, body = rows[0], rows[1:]
    cols = list(zip(*body)) if body else [()] * len(header)
    return {h.strip(): np.array([float(v) for v in c]) for h, c in zip(header, cols)}


def overlay_widths(reports: Sequence[WidthReport], positions: Sequence[float], table: dict[str, np.ndarray],
                   x_column: str, width_column: str) -> list[dict[str, Any]]:
    """Pair measured widths with the table width interpolated at each position."""
    x = table[x_column]
    w = table[width_column]
    order = np.argsort(x)
    out = []
    for rep, pos in zip(reports, positions):
        out.append({"position": float(pos), "hwhm": rep.hwhm, "axis": rep.axis,
                    "table_hwhm": float(np.interp(pos, x[order], w[order]))})
    return out
