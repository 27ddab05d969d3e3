# Closed-form signal maps
#
# The reference model gives the polarization rotation s_b and the
# transmission s_t in closed form. Here we build a grid map, look at its four
# petals, and then switch on the corrections (anisotropy, internal field,
# decay) one at a time.

import numpy as np

from hanle_sp import ModelRates, ModifiedModelParams, ScanKind, ScanProtocol, run_grid_map, run_radial_map
from hanle_sp.analysis import extrema_locus

rates = ModelRates(gamma1=1.0, gamma2=140.0)  # 140 1/s is a 40 nT wide resonance
plain = ModifiedModelParams(rates)

grid = ScanProtocol(ScanKind.GRID_XY, (-100, 100), n_points=81, y_range=(-100, 100), n_rows=81)
m = run_grid_map(grid, plain)
print("map shape", m.shape, " max |s_b| %.4f" % np.abs(m.s_b).max())

# Sign of s_b in each quadrant: diagonal quadrants share a sign.

for label, (i, j) in {"(+,+)": (60, 60), "(-,+)": (60, 20), "(-,-)": (20, 20), "(+,-)": (20, 60)}.items():
    print(f"  quadrant {label}: s_b = {m.s_b[i, j]:+.4f}")

# Extrema of each row. With k = 2 the locus is stretched twofold along b_y.

for k in (1.0, 2.0):
    loc = extrema_locus(run_grid_map(grid, ModifiedModelParams(rates, k_aniso=k)), axis="y")
    pts = loc.points()
    print(f"k = {k:.0f}: extrema span b_y in [{pts[:, 1].min():.1f}, {pts[:, 1].max():.1f}] nT")

# An internal transverse field b_y0 keeps the effective field above b_y0, so
# the transmission at the centre rises toward its wings.

for b_y0 in (0.0, 23.0):
    mm = run_grid_map(grid, ModifiedModelParams(rates, b_y0=b_y0))
    print(f"b_y0 = {b_y0:4.1f} nT: s_t centre / max = {mm.s_t[40, 40] / mm.s_t.max():.4f}")

# Radial scans: rays every 30 degrees from a 42.5 nT circle to the centre.

rays = run_radial_map(ScanProtocol(ScanKind.RADIAL, radius=42.5, angle_step=30.0, n_points=41), plain)
for r in rays:
    print(f"  ray {r.metadata['angle_deg']:5.1f} deg: s_b at the rim {r.s_b[0]:+.4f}")
