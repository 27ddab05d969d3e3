# Bifurcations and hysteresis
#
# Sweep the gain through threshold, then ramp b_y forward and back at a
# small b_x tilt and compare the two traces.

from hanle_sp import (
    DynamicsConfig,
    FieldRamp,
    FieldVector,
    ModelRates,
    SpinState,
    hysteresis_scan,
    memory_hold,
    sweep_diagram,
)
from hanle_sp.bifurcation import pitchfork_amplitude, threshold_check

rates = ModelRates(gamma1=1.0, gamma2=10.0, chi=1.5, eta=1.0, alpha=1.0, xi=0.7)
cfg = DynamicsConfig(rates)
print("threshold:", threshold_check(rates))
print("pitchfork amplitude %.4f" % pitchfork_amplitude(rates))

d = sweep_diagram("chi", (0.0, 2.0), 9, cfg, FieldVector())
for row in d.rows():
    print("  chi %.2f  p_z %+.4f  stable %s" % (row[0], row[4], bool(row[5])))

# B_y ramp at a 0.05 nT b_x tilt (at b_x = 0 the detected signal is blind).
# Above threshold the two directions switch at opposite fields, so the loop
# encloses an area. A larger tilt eats into the gain and narrows the loop.

ramp = FieldRamp.line("b_y", -3.0, 3.0, FieldVector(0.05, 0.0), rate=6e-3, n_samples=301)
rep = hysteresis_scan(ramp, cfg)
print("bistable", rep.bistable, " loop area %.3g" % rep.loop_area)
print("switch points", rep.switch_points)

# Below threshold the same ramp is reversible.

sub = DynamicsConfig(ModelRates(gamma1=1.0, gamma2=10.0, chi=0.5, eta=1.0, alpha=1.0, xi=0.7))
print("subthreshold bistable", hysteresis_scan(FieldRamp.line("b_y", -3.0, 3.0, FieldVector(0.2, 0.0)), sub).bistable)

# With the field switched off, p_z keeps the sign it had.

for start in (rep.forward.p_z[-1], rep.backward.p_z[-1]):
    held = memory_hold(SpinState(p_z=start), FieldVector(), cfg, 100.0)
    print("memory hold: p_z %+.4f -> %+.4f" % (start, held.final_state.p_z))
