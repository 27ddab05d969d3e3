import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hanle_sp import ModelRates, ModifiedModelParams
from hanle_sp.analysis import (
    FitGuess,
    FitOptions,
    UnresolvedWidthError,
    WidthMethod,
    amplitude_curve,
    dominant_extrema,
    extrema_locus,
    find_extrema,
    fit_amplitude_curve,
    fit_map,
    hwhm_extrema,
    hwhm_half_max,
    load_width_table,
    normalize_amplitude,
    overlay_widths,
)
from hanle_sp.scan import ScanKind, ScanProtocol, SignalMap, run_grid_map

X = np.linspace(-5, 5, 1001)
DISPERSION = X / (1 + X**2)


def test_dispersion_extrema():
    ext = find_extrema((X, DISPERSION))
    assert [e.kind for e in ext] == ["min", "max"]
    np.testing.assert_allclose([e.position for e in ext], [-1, 1], atol=1e-4)  # vertex error ~ step**2
    np.testing.assert_allclose([e.value for e in ext], [-0.5, 0.5], atol=1e-8)


def test_monotone_trace_has_no_extrema():
    assert find_extrema((X, X**3)) == []
    with pytest.raises(UnresolvedWidthError):
        hwhm_extrema((X, X**3))


def test_hwhm_examples():
    rep = hwhm_extrema((X, DISPERSION))
    assert rep.hwhm == pytest.approx(1.0, abs=1e-4)
    assert rep.method is WidthMethod.EXTREMA_HALF_DISTANCE
    b = X / 10  # same curve with the field in units of 0.1 nT
    assert hwhm_extrema((b, DISPERSION)).hwhm == pytest.approx(0.1, abs=1e-5)
    lor = hwhm_half_max((X, 1 / (1 + X**2)))
    assert lor.hwhm == pytest.approx(1.0, abs=1e-4)
    assert lor.method is WidthMethod.HALF_MAX


def test_half_max_needs_both_crossings():
    with pytest.raises(UnresolvedWidthError):
        hwhm_half_max((X, np.exp(X)))
    with pytest.raises(UnresolvedWidthError):
        hwhm_half_max((X, np.zeros_like(X)))


@given(st.floats(0.01, 100), st.floats(0.01, 100) | st.floats(-100, -0.01))
def test_width_scales_with_field_only(sx, sy):
    ref = hwhm_extrema((X, DISPERSION)).hwhm
    rep = hwhm_extrema((sx * X, sy * DISPERSION))
    assert rep.hwhm == pytest.approx(sx * ref, rel=1e-9)


def test_dominant_extrema_prefers_largest():
    y = DISPERSION + 0.1 * np.sin(6 * X) * np.exp(-((X - 4) ** 2))
    lo, hi = dominant_extrema(find_extrema((X, y)))
    assert lo.position == pytest.approx(-1, abs=1e-3)
    assert hi.position == pytest.approx(1, abs=0.05)


def test_normalize_amplitude():
    assert normalize_amplitude(1.2e-3, 40e-6, 1e10) == pytest.approx(3.0e-9, rel=1e-12)
    assert normalize_amplitude(5.8e-9, 0.5, 4e6) == pytest.approx(2.9e-15, rel=1e-12)
    with pytest.raises(ValueError):
        normalize_amplitude(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        normalize_amplitude(1.0, 1.0, -1.0)


@given(st.floats(-1e3, 1e3), st.floats(1e-6, 1e3), st.floats(1e3, 1e12), st.floats(0.01, 100))
def test_normalize_amplitude_homogeneous(peak, current, density, c):
    ref = normalize_amplitude(peak, current, density)
    assert normalize_amplitude(c * peak, c * current, density) == pytest.approx(ref, rel=1e-12, abs=1e-300)


TRUE = ModifiedModelParams(ModelRates(1.0, 2.0), k_aniso=1.5, b_y0=0.1, decay_coeff=0.05)
GRID = ScanProtocol(ScanKind.GRID_XY, (-2, 2), n_points=41, y_range=(-2, 2), n_rows=41)


def _synthetic(scale_b=1.3, scale_t=0.7):
    m = run_grid_map(GRID, TRUE)
    return SignalMap(m.b_x, m.b_y, scale_b * m.s_b, scale_t * m.s_t)


def test_fit_map_recovers_noise_free_parameters():
    data = _synthetic()
    start = ModifiedModelParams(ModelRates(1.0, 2.4), k_aniso=1.2, b_y0=0.15, decay_coeff=0.03)
    res = fit_map(data, FitGuess(start, 1.0, 1.0))
    assert res.converged
    got = res.values()
    want = {"gamma": 2.0, "k_aniso": 1.5, "b_y0": 0.1, "decay_coeff": 0.05, "scale_b": 1.3, "scale_t": 0.7}
    for name, value in want.items():
        assert got[name] == pytest.approx(value, rel=1e-6), name
    assert res.residual_rms < 1e-8 * np.abs(data.s_b).max()
    assert set(res.per_param_sensitivity) == set(want)


def test_fit_map_single_channel_and_subset():
    data = _synthetic()
    start = ModifiedModelParams(ModelRates(1.0, 2.0), k_aniso=1.5, b_y0=0.1, decay_coeff=0.08)
    res = fit_map(data, FitGuess(start), FitOptions(channels="s_b", free=("decay_coeff",)))
    assert res.params.decay_coeff == pytest.approx(0.05, rel=1e-6)
    assert res.scale_b == pytest.approx(1.3, rel=1e-6)
    assert res.scale_t == 1.0  # untouched when s_t is not fitted


def test_fit_map_rejects_missing_nodes():
    data = _synthetic()
    data.s_b[3, 4] = np.nan
    with pytest.raises(ValueError):
        fit_map(data, FitGuess(TRUE))
    with pytest.raises(ValueError):
        FitOptions(free=("gamma_gyro",))


def test_amplitude_curve_fit():
    params = ModifiedModelParams(ModelRates(1.0, 140.0), b_y0=23.0)
    b_y = np.linspace(-150, 150, 121)
    amp = amplitude_curve(b_y, params, 2.0)
    off = b_y != 0  # b_y = 0 takes the remembered branch sign
    np.testing.assert_allclose(amplitude_curve(-b_y[off], params, 2.0), -amp[off], atol=1e-15)
    assert amplitude_curve(np.array([0.0]), params, 2.0)[0] > 0
    start = ModifiedModelParams(ModelRates(1.0, 120.0), b_y0=10.0)
    res = fit_amplitude_curve(b_y, amp, FitGuess(start))
    assert res.params.b_y0 == pytest.approx(23.0, rel=1e-6)
    assert res.params.gamma == pytest.approx(140.0, rel=1e-6)
    assert res.scale_b == pytest.approx(2.0, rel=1e-6)
    plain = fit_amplitude_curve(b_y, amp, FitGuess(start), with_b_y0=False)
    assert plain.params.b_y0 == 0.0
    assert plain.residual_rms > 1e3 * res.residual_rms


def test_extrema_locus_symmetry():
    m = run_grid_map(GRID, ModifiedModelParams(ModelRates(1.0, 2.0)))
    loc = extrema_locus(m)
    assert set(loc.branches) == {"++", "+-", "-+", "--"}
    pts = {(round(x, 9), round(y, 9)) for x, y, _ in loc.points()}
    assert pts == {(round(-x, 9) + 0.0, round(-y, 9) + 0.0) for x, y in pts}


def test_extrema_locus_anisotropy():
    def column_extrema(k, span):
        p = ScanProtocol(ScanKind.GRID_XY, (0.3, 0.5), n_points=2, y_range=(-span, span), n_rows=201)
        loc = extrema_locus(run_grid_map(p, ModifiedModelParams(ModelRates(1.0, 2.0), k_aniso=k)), axis="y")
        return np.sort(loc.points()[:, 1])

    np.testing.assert_allclose(column_extrema(2.0, 4.0), 2 * column_extrema(1.0, 2.0), rtol=1e-9)


def test_extrema_locus_empty():
    empty = SignalMap(np.array([]), np.array([]), np.empty((0, 0)))
    assert len(extrema_locus(empty)) == 0
    flat = SignalMap(np.arange(3.0), np.arange(2.0), np.zeros((2, 3)))
    assert extrema_locus(flat).points().shape == (0, 3)


def test_width_table_overlay(tmp_path):
    path = tmp_path / "widths.csv"
    path.write_text("# model widths\nb_y,hwhm\n0,1.0\n2,3.0\n")
    table = load_width_table(path)
    np.testing.assert_array_equal(table["hwhm"], [1.0, 3.0])
    rep = hwhm_extrema((X, DISPERSION), axis="x")
    rows = overlay_widths([rep], [1.0], table, "b_y", "hwhm")
    assert rows[0]["table_hwhm"] == 2.0
    assert rows[0]["hwhm"] == rep.hwhm
    (tmp_path / "empty.csv").write_text("# nothing\n")
    with pytest.raises(ValueError):
        load_width_table(tmp_path / "empty.csv")
