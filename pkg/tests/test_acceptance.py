"""Acceptance checks, one test per criterion.

Each test appends a ``CRITERION n PASS|FAIL: ...`` line that is printed in
the terminal summary, then asserts.
"""

from __future__ import annotations

import subprocess
import sys
import time
from fractions import Fraction

import mpmath
import numpy as np
import sympy as sp
from scipy.linalg import expm

from conftest import CRITERIA_LINES
from hanle_sp import (
    DynamicsConfig,
    Engine,
    FieldRamp,
    FieldVector,
    FitGuess,
    IntegratorSettings,
    ModelRates,
    ModifiedModelParams,
    ScanKind,
    ScanProtocol,
    SignalMap,
    SpinState,
    UnresolvedWidthError,
    a_p_closed_form,
    hwhm_extrema,
    hysteresis_scan,
    integrate,
    memory_hold,
    run_line_scan,
    s_b_classic,
    s_t_classic,
    steady_state_full,
    steady_state_linear,
    threshold_check,
)
from hanle_sp.analysis import amplitude_curve, find_extrema, fit_amplitude_curve
from hanle_sp.bifurcation import pitchfork_amplitude
from hanle_sp.dataio import export, ingest_map, render
from hanle_sp.spin_algebra import (
    normalized_projection_ratio,
    quasi_alignment_moment,
    second_moment_x,
    stretched_state_populations,
    wigner_small_d,
)


def record(n: int, passed: bool, detail: str) -> None:
    CRITERIA_LINES.append(f"CRITERION {n}: {'PASS' if passed else 'FAIL'}: {detail}")
    print(CRITERIA_LINES[-1])


# ---------------------------------------------------------------- 1


def _symbolic_signals():
    wx, wy, wz, g = sp.symbols("wx wy wz g", real=True)
    wyz2 = wy**2 + wz**2
    den = (g**2 + wx**2 + wyz2) * (g**2 + 4 * wx**2 + 4 * wyz2)
    sb = (g * wz * (g**2 + 4 * wx**2 + wyz2) - wx * wy * (g**2 + 4 * wx**2 - 2 * wyz2)) / den
    st = (g**2 + (wyz2 - 2 * wx**2) ** 2 / g**2 + 2 * wyz2 + 5 * wx**2) / den
    args = (wx, wy, wz, g)
    return sp.lambdify(args, sb, "mpmath"), sp.lambdify(args, st, "mpmath")


def test_criterion_1_closed_form_matches_symbolic():
    rng = np.random.default_rng(11)
    n = 10_000
    w = rng.uniform(-50, 50, size=(3, n))
    g = rng.uniform(0.1, 20, size=n)
    t0 = time.perf_counter()
    sb = s_b_classic(w, g)
    st = s_t_classic(w, g)
    elapsed = time.perf_counter() - t0
    f_sb, f_st = _symbolic_signals()
    worst = 0.0
    with mpmath.workdps(40):
        for i in range(n):
            args = tuple(mpmath.mpf(float(v)) for v in (w[0, i], w[1, i], w[2, i], g[i]))
            for got, f in ((sb[i], f_sb), (st[i], f_st)):
                ref = f(*args)
                err = abs((mpmath.mpf(got) - ref) / ref) if ref != 0 else abs(mpmath.mpf(got))
                worst = max(worst, float(err))
    ok = worst <= 1e-12 and elapsed < 1.0
    record(1, ok, f"max rel err {worst:.2e} (tol 1e-12), runtime {elapsed:.3f} s (< 1 s)")
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion_2_symmetry_suite():
    rng = np.random.default_rng(12)
    n = 10_000
    wx, wy, wz = rng.uniform(-30, 30, size=(3, n))
    g = rng.uniform(0.1, 10, size=n)
    zero = np.zeros(n)
    failures = []

    def exact(name, a, b):
        if not np.array_equal(a, b):
            failures.append(f"{name}: max diff {np.max(np.abs(a - b)):.1e}")

    sb = s_b_classic((wx, wy, zero), g)
    exact("s_b odd in wx", s_b_classic((-wx, wy, zero), g), -sb)
    exact("s_b odd in wy", s_b_classic((wx, -wy, zero), g), -sb)
    exact("s_b even under (wx,wy)->-(wx,wy)", s_b_classic((-wx, -wy, zero), g), sb)
    sb3 = s_b_classic((wx, wy, wz), g)
    exact("s_b odd under (wx,wz)->-(wx,wz)", s_b_classic((-wx, wy, -wz), g), -sb3)
    st = s_t_classic((wx, wy, wz), g)
    for name, args in (
        ("s_t even in wx", (-wx, wy, wz)),
        ("s_t even in wy", (wx, -wy, wz)),
        ("s_t even in wz", (wx, wy, -wz)),
        ("s_t symmetric in wy<->wz", (wx, wz, wy)),
    ):
        exact(name, s_t_classic(args, g), st)
    # dependence on (wy, wz) only through wy^2 + wz^2: rotate (wy, wz) by an angle
    phi = rng.uniform(0, 2 * np.pi, size=n)
    ry, rz = wy * np.cos(phi) - wz * np.sin(phi), wy * np.sin(phi) + wz * np.cos(phi)
    rel = np.max(np.abs(s_t_classic((wx, ry, rz), g) / st - 1))
    if rel > 1e-13:
        failures.append(f"s_t depends on wyz^2 only: rel {rel:.1e}")
    # s_b at wy = 0 is odd in wz and independent of the sign of wx
    sbz = s_b_classic((wx, zero, wz), g)
    exact("s_b(wy=0) even in wx", s_b_classic((-wx, zero, wz), g), sbz)
    exact("s_b(wy=0) odd in wz", s_b_classic((wx, zero, -wz), g), -sbz)
    ok = not failures
    record(2, ok, f"{n} samples, {11 - len(failures)}/11 invariants exact" + ("" if ok else f"; {failures}"))
    assert ok, failures


# ---------------------------------------------------------------- 3


def _linear_oracle(wx, wy, g1, g2, a_x):
    """Hand-derived stationary alignment for chi = eta = alpha = 0."""
    a_z = g2 * wy * a_x / (g2 * g2 + wx * wx)
    return np.array([wx * a_z / g2, a_z, 0.0, 0.0])


def test_criterion_3_ode_matches_linear_steady_state():
    rng = np.random.default_rng(13)
    settings = IntegratorSettings(rel_tol=1e-8, abs_tol=1e-12)
    t0 = time.perf_counter()
    worst, worst_fn = 0.0, 0.0
    for _ in range(100):
        g1 = rng.uniform(0.5, 5)
        g2 = rng.uniform(1, 50)
        a_x = rng.choice([-1, 1]) * rng.uniform(0.2, 2)
        wx, wy = rng.uniform(-20, 20, size=2)
        rates = ModelRates(gamma1=g1, gamma2=g2, a_x=a_x)
        cfg = DynamicsConfig(rates)
        start = SpinState(*rng.normal(0, 0.1, size=4))
        # fixed horizon of 50 slowest decay times: exp(-50) is far below the tolerance
        traj = integrate(start, (wx, wy, 0.0), cfg, settings, t_end=50.0 / min(g1, g2))
        got = traj.y[-1]
        ref = _linear_oracle(wx, wy, g1, g2, a_x)
        fn = steady_state_linear((wx, wy, 0.0), cfg).as_array()
        scale = np.linalg.norm(ref)
        worst = max(worst, np.linalg.norm(got - ref) / scale)
        worst_fn = max(worst_fn, np.linalg.norm(fn - ref) / scale)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and worst_fn <= 1e-12 and elapsed < 30
    record(3, ok, f"100 draws, ODE rel err {worst:.1e} (tol 1e-6), closed form vs oracle {worst_fn:.1e}, "
                  f"runtime {elapsed:.1f} s (< 30 s)")
    assert ok


# ---------------------------------------------------------------- 4


def test_criterion_4_pitchfork():
    rng = np.random.default_rng(14)
    worst = 0.0
    labels_ok = True
    for _ in range(50):
        g1 = rng.uniform(0.2, 5)
        chi = g1 * (1 + rng.uniform(0.02, 3))
        eta = rng.uniform(0.1, 10)
        rates = ModelRates(gamma1=g1, gamma2=rng.uniform(1, 50), chi=chi, eta=eta, alpha=rng.uniform(0, 2))
        eqs = steady_state_full((0.0, 0.0, 0.0), DynamicsConfig(rates))
        amp = np.sqrt((chi - g1) / eta)
        pz = eqs.p_z_values()
        if len(pz) != 3:
            labels_ok = False
            continue
        worst = max(worst, abs(pz[0] + amp), abs(pz[2] - amp), abs(pz[1]))
        labels_ok &= [e.stable for e in eqs] == [True, False, True]
    g1 = 1.3
    boundary = (
        not threshold_check(ModelRates(gamma1=g1, gamma2=10, chi=g1))
        and threshold_check(ModelRates(gamma1=g1, gamma2=10, chi=np.nextafter(g1, 2)))
        and pitchfork_amplitude(ModelRates(gamma1=g1, gamma2=10, chi=g1, eta=1)) == 0.0
    )
    ok = worst <= 1e-8 and labels_ok and boundary
    record(4, ok, f"50 draws, max |p_z - amp| {worst:.1e} (tol 1e-8), stability labels "
                  f"{'ok' if labels_ok else 'wrong'}, threshold boundary {'exact' if boundary else 'wrong'}")
    assert ok


# ---------------------------------------------------------------- 5


def test_criterion_5_anisotropic_narrowing():
    """Widths of full-model ODE traces along b_x and b_y with gamma2/gamma1 = 100."""
    t0 = time.perf_counter()
    rates = ModelRates(gamma1=1.0, gamma2=100.0, alpha=1.0, xi=0.7, gamma_gyro=1.0)
    cfg = DynamicsConfig(rates)
    settings = IntegratorSettings(rel_tol=1e-8, abs_tol=1e-12)
    # projected orientation over direct alignment near the centre: alpha*xi*gamma2/gamma1^2
    dominance = rates.alpha * rates.xi * rates.gamma2 / rates.gamma1**2
    along_x = run_line_scan(
        ScanProtocol(ScanKind.LINE_X, (-20, 20), FieldVector(0, 20), n_points=401, engine=Engine.ODE), cfg, settings
    )
    along_y = run_line_scan(
        ScanProtocol(ScanKind.LINE_Y, (-400, 400), FieldVector(1, 0), n_points=401, engine=Engine.ODE), cfg, settings
    )
    w_x = hwhm_extrema(along_x).hwhm
    try:
        w_y = hwhm_extrema(along_y).hwhm
        bound = False
        detail_y = f"hwhm_y {w_y:.3g}"
    except UnresolvedWidthError:
        # no resonance inside the window: for an odd, monotone trace the
        # dominant pair lies symmetrically outside, so the width is at least
        # the half-range (oddness holds up to the ramp lag, ~0.2% here)
        y = along_y.s_b
        odd = float(np.max(np.abs(y + y[::-1]))) <= 1e-2 * float(np.max(np.abs(y)))
        monotone = bool(np.all(np.diff(y) > 0) or np.all(np.diff(y) < 0))
        if not odd or not monotone or find_extrema(along_y):
            raise
        w_y = float(np.max(along_y.coordinate))
        bound = True
        slope = np.polyfit(along_y.coordinate, y, 1)[0]
        detail_y = f"b_y trace odd, monotone, linear (slope {slope:.3g}): hwhm_y > {w_y:.0f}"
    elapsed = time.perf_counter() - t0
    ratio = w_y / w_x
    ok = ratio >= 20 and elapsed < 120
    record(5, ok, f"alpha*xi*gamma2/gamma1^2 = {dominance:.0f}, hwhm_x {w_x:.3g}, {detail_y}, "
                  f"ratio {'>' if bound else ''}{ratio:.3g} (>= 20), runtime {elapsed:.1f} s (< 120 s)")
    assert ok


# ---------------------------------------------------------------- 6


def _hyst_rates(chi):
    return ModelRates(gamma1=1.0, gamma2=10.0, chi=chi, eta=1.0, alpha=1.0, xi=0.7, gamma_gyro=1.0)


def test_criterion_6_hysteresis_and_memory():
    settings = IntegratorSettings(rel_tol=1e-8, abs_tol=1e-11)
    fixed = FieldVector(0.0, 0.05)
    # above threshold: b_x scan at fixed small b_y
    above = hysteresis_scan(FieldRamp.line("b_x", -3, 3, fixed, rate=6 / 3000), DynamicsConfig(_hyst_rates(2.0)),
                            settings)
    part_a = above.valid and above.bistable and bool(above.inverted_intervals)
    # below threshold: slow ramp, traces coincide
    below = hysteresis_scan(FieldRamp.line("b_x", -3, 3, fixed, rate=6 / 30000), DynamicsConfig(_hyst_rates(0.5)),
                            settings)
    peak = np.max(np.abs(below.forward.signal))
    rel_rms = below.rms_difference / peak
    part_b = below.valid and not below.bistable and rel_rms < 1e-3
    # memory: come from negative b_y into the bistable window, stop at b_x = 0 and hold
    cfg = DynamicsConfig(_hyst_rates(1.5))
    ramp = FieldRamp.line("b_y", -3.0, 0.5, rate=3.5 / 3000)
    from hanle_sp.bifurcation import run_ramp

    _, traj = run_ramp(ramp, cfg, settings)
    held = memory_hold(traj.final_state, FieldVector(0.0, 0.5), cfg, 100.0, settings)
    held_zero = memory_hold(traj.final_state, FieldVector(0.0, 0.0), cfg, 100.0, settings)
    signs = np.sign(np.concatenate([held.y[:, 3], held_zero.y[:, 3]]))
    part_c = bool(np.all(signs == np.sign(traj.final_state.p_z))) and traj.final_state.p_z < 0
    # supplementary: the same machinery on a b_y ramp above threshold
    b_y_ramp = hysteresis_scan(FieldRamp.line("b_y", -3, 3, rate=6 / 3000), DynamicsConfig(_hyst_rates(1.5)),
                               settings)
    ok = part_a and part_b and part_c
    record(
        6, ok,
        f"(a) chi=2*gamma1 b_x scan at b_y=0.05: bistable={above.bistable}, inverted intervals "
        f"{above.inverted_intervals or 'none'} -> {'ok' if part_a else 'not reproduced'}; "
        f"(b) subthreshold rel RMS {rel_rms:.1e} (abs {below.rms_difference:.1e}), bistable={below.bistable} "
        f"-> {'ok' if part_b else 'fail'}; (c) memory hold 100/gamma1 sign kept -> {'ok' if part_c else 'fail'}; "
        f"[b_y ramp for comparison: inverted {b_y_ramp.inverted_intervals}, switches {b_y_ramp.switch_points}]",
    )
    assert ok


# ---------------------------------------------------------------- 7


def test_criterion_7_effective_field_fit():
    t0 = time.perf_counter()
    true = ModifiedModelParams(ModelRates(gamma1=1.0, gamma2=140.0), b_y0=23.0)
    b_y = np.linspace(-150, 150, 121)
    clean = amplitude_curve(b_y, true)
    sigma = 0.01 * np.max(np.abs(clean))
    rng = np.random.default_rng(17)
    guess = FitGuess(ModifiedModelParams(ModelRates(gamma1=1.0, gamma2=100.0), b_y0=10.0))
    errors, nested = [], True
    for _ in range(20):
        data = clean + rng.normal(0, sigma, b_y.shape)
        with_offset = fit_amplitude_curve(b_y, data, guess)
        without = fit_amplitude_curve(b_y, data, guess, with_b_y0=False)
        errors.append(abs(with_offset.params.b_y0 / 23.0 - 1))
        nested &= with_offset.residual_rms < without.residual_rms
    elapsed = time.perf_counter() - t0
    worst = max(errors)
    ok = worst <= 0.05 and elapsed < 60 and nested
    record(7, ok, f"20 repeats, worst |b_y0/23 - 1| = {worst:.3f} (tol 0.05), offset model lowers residual in all: "
                  f"{nested}, runtime {elapsed:.1f} s (< 60 s)")
    assert ok


# ---------------------------------------------------------------- 8


def _j_y(twice_f: int) -> np.ndarray:
    """J_y in the J_z basis, ascending m, from the ladder operators."""
    f = twice_f / 2
    m = np.arange(twice_f + 1) - f
    jp = np.zeros((twice_f + 1, twice_f + 1))
    for k in range(twice_f):
        jp[k + 1, k] = np.sqrt(f * (f + 1) - m[k] * (m[k] + 1))
    return (jp - jp.T) / 2j


def test_criterion_8_spin_algebra_exactness():
    pops = stretched_state_populations(4).populations
    exact_pop = bool(np.array_equal(pops * 256, np.array([1, 8, 28, 56, 70, 56, 28, 8, 1], float)))
    moments = (
        second_moment_x(4) == 2
        and quasi_alignment_moment(4) == -14
        and normalized_projection_ratio(4) == Fraction(-7, 10)
    )
    worst = 0.0
    for twice_f in range(1, 21):
        f = Fraction(twice_f, 2)
        for beta in (np.pi / 2, 0.3, 2.1):
            oracle = expm(-1j * beta * _j_y(twice_f)).real
            worst = max(worst, float(np.max(np.abs(wigner_small_d(f, beta) - oracle))))
        col = expm(-1j * np.pi / 2 * _j_y(twice_f)).real[:, -1] ** 2
        worst = max(worst, float(np.max(np.abs(stretched_state_populations(f).populations - col))))
    ok = exact_pop and moments and worst <= 1e-10
    record(8, ok, f"F=4 populations exact: {exact_pop}; <F_x^2>=2, A_xP=-14, ratio=-7/10: {moments}; "
                  f"Wigner-d vs matrix-exponential oracle, F<=10: {worst:.1e} (tol 1e-10)")
    assert ok


# ---------------------------------------------------------------- 9


def test_criterion_9_aoc_central_structure():
    x = np.linspace(-100, 100, 20001)
    widths, wings = [], []
    for a in (0.5, 2.0, 10.0):
        rates = ModelRates(gamma1=1.0, gamma2=10.0, alpha=a, xi=0.7, gamma_gyro=1.0)
        y = a_p_closed_form((x, 1.0), rates, "AOC")
        widths.append(hwhm_extrema((x, y)).hwhm)
        peak = np.max(np.abs(y))
        wings.append(float(np.max(np.abs(x[np.abs(y) >= 0.05 * peak]))))
    spread = max(widths) / min(widths) - 1
    growing = wings[0] < wings[1] < wings[2]
    ok = spread < 0.2 and growing
    record(9, ok, f"hwhm {np.round(widths, 4).tolist()} (spread {spread:.1%} < 20%), "
                  f"5% wing half-width {wings} grows with alpha: {growing}")
    assert ok


# ---------------------------------------------------------------- 10


def _fixed_step_trace_bytes() -> bytes:
    rates = ModelRates(gamma1=1.0, gamma2=10.0, chi=1.5, eta=1.0, alpha=1.0, xi=0.7, gamma_gyro=1.0)
    protocol = ScanProtocol(ScanKind.LINE_X, (-3, 3), FieldVector(0, 0.2), n_points=61, sweep_rate=0.1,
                            engine=Engine.ODE)
    trace = run_line_scan(protocol, DynamicsConfig(rates), IntegratorSettings(method="fixed", max_step=0.01))
    return render(trace).encode()


def test_criterion_10_determinism_and_round_trip(tmp_path):
    same_lib = _fixed_step_trace_bytes() == _fixed_step_trace_bytes()
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "rates.gamma1 = 1\nrates.gamma2 = 10\nrates.chi = 1.5\nrates.eta = 1\nrates.alpha = 1\nrates.xi = 0.7\n"
        "rates.gamma_gyro = 1\nprotocol.kind = LINE_X\nprotocol.engine = ODE\nprotocol.sweep_min = -3\n"
        "protocol.sweep_max = 3\nprotocol.n_points = 61\nprotocol.fixed_b_y = 0.2\nprotocol.sweep_rate = 0.1\n"
        "integrator.method = fixed\nintegrator.max_step = 0.01\n"
    )
    outputs = []
    for run in ("a", "b"):
        subprocess.run([sys.executable, "-m", "hanle_sp.cli", "scan", "--config", str(cfg), "--no-timestamp",
                        "--out", str(tmp_path / run)], check=True, capture_output=True)
        outputs.append((tmp_path / run / "hanle_scan.csv").read_bytes())
    same_cli = outputs[0] == outputs[1]

    rng = np.random.default_rng(20)
    lossless = 0
    for k in range(10):
        nx, ny = rng.integers(1, 12, size=2)
        b_x = np.sort(rng.choice(np.linspace(-500, 500, 4001), nx, replace=False)) + rng.normal(0, 1e-3, nx)
        b_x.sort()
        b_y = np.sort(rng.normal(0, 100, ny))
        s_b = rng.normal(0, 1, (ny, nx)) * 10.0 ** rng.integers(-30, 30, (ny, nx))
        s_t = rng.standard_cauchy((ny, nx))
        m = SignalMap(b_x, b_y, s_b, s_t)
        long_path = export(m, tmp_path / f"m{k}_long.csv", "CSV_LONG", timestamp=False)
        grid_path = export(m, tmp_path / f"m{k}_grid.csv", "CSV_GRID", timestamp=False)
        back_long = ingest_map(long_path, "CSV_LONG")
        back_grid = ingest_map(grid_path, "CSV_GRID")
        lossless += all(
            np.array_equal(a, b)
            for a, b in (
                (back_long.b_x, m.b_x), (back_long.b_y, m.b_y), (back_long.s_b, m.s_b), (back_long.s_t, m.s_t),
                (back_grid.b_x, m.b_x), (back_grid.b_y, m.b_y), (back_grid.s_b, m.s_b),
            )
        )
    ok = same_lib and same_cli and lossless == 10
    record(10, ok, f"fixed-step bytes identical: library {same_lib}, CLI {same_cli}; "
                   f"CSV round trips bit-exact {lossless}/10")
    assert ok
