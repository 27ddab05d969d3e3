# Resonance widths and model fits
#
# Widths come from the distance between the two dominant extrema of a line
# scan. Maps are fitted to the corrected model by nonlinear least squares.

import numpy as np

from hanle_sp import FieldVector, ModelRates, ModifiedModelParams, ScanKind, ScanProtocol, run_grid_map, run_line_scan
from hanle_sp.analysis import FitGuess, amplitude_curve, fit_amplitude_curve, fit_map, hwhm_extrema
from hanle_sp.scan import SignalMap

truth = ModifiedModelParams(ModelRates(1.0, 140.0), k_aniso=1.4, b_y0=23.0, decay_coeff=0.002)

line = run_line_scan(ScanProtocol(ScanKind.LINE_X, (-150, 150), FieldVector(0, 30.0), 601), truth)
print("b_x HWHM at b_y = 30 nT: %.2f nT" % hwhm_extrema(line).hwhm)

# Noisy synthetic map, then a joint fit of both channels.

rng = np.random.default_rng(7)
grid = ScanProtocol(ScanKind.GRID_XY, (-150, 150), n_points=41, y_range=(-150, 150), n_rows=41)
m = run_grid_map(grid, truth)
noisy = SignalMap(m.b_x, m.b_y, m.s_b + rng.normal(0, 1e-3, m.shape), m.s_t + rng.normal(0, 1e-3, m.shape))
start = ModifiedModelParams(ModelRates(1.0, 110.0), k_aniso=1.0, b_y0=10.0, decay_coeff=0.001)
res = fit_map(noisy, FitGuess(start))
print("joint fit converged:", res.converged)
for k, v in res.values().items():
    print(f"  {k:12s} {v:.4g}")

# Amplitude versus b_y, fitted with and without the internal field.

b_y = np.linspace(-150, 150, 121)
amp = amplitude_curve(b_y, truth) + rng.normal(0, 0.01 * 0.5, b_y.size)
good = fit_amplitude_curve(b_y, amp, FitGuess(start))
plain = fit_amplitude_curve(b_y, amp, FitGuess(start), with_b_y0=False)
print("b_y0 = %.1f nT, residual %.3g (without b_y0: %.3g)" % (good.params.b_y0, good.residual_rms, plain.residual_rms))
