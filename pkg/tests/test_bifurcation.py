import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hanle_sp import (
    DynamicsConfig,
    FieldRamp,
    FieldVector,
    IntegratorSettings,
    ModelRates,
    SpinState,
    hysteresis_scan,
    memory_hold,
    sweep_diagram,
    threshold_check,
)
from hanle_sp.bifurcation import UnboundedGrowthError, branch_switches, pitchfork_amplitude, run_ramp
from hanle_sp.dynamics import rhs

FAST = IntegratorSettings(rel_tol=1e-7, abs_tol=1e-10)


def rates(**kw):
    base = dict(gamma1=1.0, gamma2=10.0, eta=1.0, alpha=1.0, xi=0.7, gamma_gyro=1.0)
    return ModelRates(**{**base, **kw})


def test_pitchfork_examples():
    assert pitchfork_amplitude(ModelRates(1, 1, chi=1, eta=1)) == 0
    assert pitchfork_amplitude(ModelRates(1, 1, chi=2, eta=1)) == 1
    amp = pitchfork_amplitude(ModelRates(1, 1, chi=1.44, eta=4))
    assert amp == pytest.approx(math.sqrt(0.11), rel=1e-15)
    d = rhs(SpinState(p_z=amp), (0, 0, 0), DynamicsConfig(ModelRates(1, 1, chi=1.44, eta=4)))
    assert abs(d.p_z) < 1e-15
    with pytest.raises(UnboundedGrowthError):
        pitchfork_amplitude(ModelRates(1, 1, chi=2))


@given(st.floats(0.1, 10), st.floats(0, 5), st.floats(0.01, 10))
def test_landau_equation(g1, excess, eta):
    r = ModelRates(g1, 1.0, chi=g1 + excess, eta=eta)
    p = pitchfork_amplitude(r)
    # (chi - gamma1) * P - eta * P**3 = 0
    assert abs((r.chi - g1) * p - eta * p**3) <= 1e-12 * max(1.0, (r.chi - g1) * p)


def test_threshold_examples():
    assert not threshold_check(ModelRates(1, 1, chi=0))
    assert not threshold_check(ModelRates(1, 1, chi=1))
    assert threshold_check(ModelRates(1, 1, chi=1.01))


def test_chi_sweep_pitchfork():
    d = sweep_diagram("chi", (0.5, 2.0), 7, DynamicsConfig(rates(alpha=0.0)))
    counts = d.stable_counts().tolist()
    roots = d.root_counts().tolist()
    below = d.control_values < 1.0
    assert all(c == 1 for c, b in zip(counts, below) if b)
    assert all(c == 2 for c, v in zip(counts, d.control_values) if v > 1.0)
    assert all(n == 3 for n, v in zip(roots, d.control_values) if v > 1.0)
    for eqs in d.branches:
        pz = eqs.p_z_values()
        assert np.array_equal(pz, -pz[::-1])  # exact +- pairs at zero field
    assert set(np.unique(d.stable_counts())) <= {1, 2}


def test_b_y_sweep_imperfect_and_fold():
    cfg = DynamicsConfig(rates(chi=1.5))
    d = sweep_diagram("b_y", (0.0, 2.0), 201, cfg)
    for v, eqs in zip(d.control_values, d.branches):
        for e in eqs:
            assert np.max(np.abs(rhs(e.state, (0, v, 0), cfg).as_array())) < 1e-10
    stable = [e for e in d.branches[20] if e.stable]  # b_y = 0.2
    assert len(stable) == 2 and abs(stable[0].state.p_z) != pytest.approx(abs(stable[1].state.p_z))
    # fold of the reduced cubic -eta P^3 + mu P + h: |h| = 2 (mu/3)^(3/2) / sqrt(eta), h = alpha*omega_y*a_x/gamma2
    fold = 2 * (0.5 / 3) ** 1.5 * 10
    assert d.fold_points() == pytest.approx([fold], abs=0.01)


def test_zero_width_range_and_bad_steps():
    d = sweep_diagram("chi", (2.0, 2.0), 50, DynamicsConfig(rates()))
    assert len(d.control_values) == 1 and len(d.branches) == 1
    with pytest.raises(ValueError):
        sweep_diagram("chi", (0.0, 2.0), 1, DynamicsConfig(rates()))
    with pytest.raises(ValueError):
        sweep_diagram("nonsense", (0.0, 2.0), 3, DynamicsConfig(rates()))


def test_branch_switch_detection():
    x = np.linspace(-1, 1, 11)
    p = np.array([-1, -1, -1, -0.05, 0.05, -0.05, 0.5, 1, 1, 1, 1.0])
    assert branch_switches(x, p, 0.1) == [pytest.approx(x[5] + 0.5 * 0.2 * 0.05 / 0.55, abs=0.2)]
    assert branch_switches(x, np.ones(11), 0.1) == []


def test_ramp_geometry():
    r = FieldRamp.line("b_x", -3, 3, FieldVector(0, 0.2), rate=0.5, n_samples=7)
    assert r.length == 6 and r.duration(rates()) == 12
    assert r.controls().tolist() == [-3, -2, -1, 0, 1, 2, 3]
    back = r.reversed()
    assert back.start == r.stop and back.control_start == 3
    ray = FieldRamp.through_origin(90, 2.0)
    assert ray.start.b_y == pytest.approx(2) and ray.stop.b_y == pytest.approx(-2)
    assert FieldRamp.line("b_y", 0, 1).duration(rates()) == 1e3
    with pytest.raises(ValueError):
        FieldRamp.line("b_z", 0, 1)


TILT = FieldVector(0.2, 0.0)  # at b_x = 0 the detected signal vanishes identically


def test_subthreshold_no_hysteresis():
    rep = hysteresis_scan(FieldRamp.line("b_y", -3, 3, TILT), DynamicsConfig(rates(chi=0.5)), FAST)
    assert rep.valid and not rep.bistable
    # p_z follows sign(b_y) in both directions: one crossing each, at the same place up to lag
    (f,), (b,) = rep.switch_points["forward"], rep.switch_points["backward"]
    assert abs(f) < 0.05 and abs(b) < 0.05
    assert rep.inverted_intervals == [] and rep.differing_intervals == []
    assert rep.loop_area < 1e-2 * np.max(np.abs(rep.forward.signal)) * 6


def test_above_threshold_b_y_ramp_is_bistable():
    rep = hysteresis_scan(FieldRamp.line("b_y", -3, 3, TILT, rate=6e-2), DynamicsConfig(rates(chi=1.5)), FAST)
    assert rep.valid and rep.bistable and rep.loop_area > 0
    assert rep.inverted_intervals
    (lo, hi), = rep.inverted_intervals
    assert lo < 0 < hi
    assert len(rep.switch_points["forward"]) == 1 and rep.switch_points["forward"][0] > 0
    assert len(rep.switch_points["backward"]) == 1 and rep.switch_points["backward"][0] < 0
    assert np.array_equal(rep.aligned_backward_signal(), rep.backward.signal[::-1])


def test_slow_ramp_switches_approach_fold():
    fold = 2 * (0.5 / 3) ** 1.5 * 10
    cfg = DynamicsConfig(rates(chi=1.5))
    gaps = []
    for rate in (6e-2, 6e-3):
        ramp = FieldRamp.line("b_y", -3, 3, rate=rate, n_samples=601)
        rep = hysteresis_scan(ramp, cfg, FAST)
        gaps.append(rep.switch_points["forward"][0] - fold)
    assert 0 < gaps[1] < gaps[0]
    assert gaps[1] < 0.15 * fold


def test_memory_hold_keeps_branch():
    cfg = DynamicsConfig(rates(chi=1.5))
    _, traj = run_ramp(FieldRamp.line("b_y", -3.0, 0.0, rate=3e-2), cfg, FAST)
    assert traj.final_state.p_z < 0
    held = memory_hold(traj.final_state, FieldVector(), cfg, 100.0, FAST)
    assert np.all(held.y[:, 3] < 0)
    assert held.final_state.p_z == pytest.approx(-pitchfork_amplitude(cfg.rates), rel=1e-5)


def test_failed_integration_flags_report():
    cfg = DynamicsConfig(ModelRates(1.0, 1.0, chi=50.0, alpha=1.0))
    rep = hysteresis_scan(FieldRamp.line("b_x", -1, 1, rate=0.01), cfg, FAST)
    assert not rep.valid and rep.diagnostic and not rep.bistable
