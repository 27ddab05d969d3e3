# Angular-momentum bookkeeping
#
# Populations of the stretched state along x, second moments and the
# projection ratio, exact for integer and half-integer F.

from fractions import Fraction

from hanle_sp import spin_algebra

for f in (Fraction(1, 2), Fraction(3), Fraction(4), Fraction(7, 2)):
    pops = spin_algebra.binomial_weights_exact(f)
    print(f"F = {f}: populations {[str(p) for p in pops]}")
    print(f"  <F_x^2> {spin_algebra.second_moment_x(f)}  ratio {float(spin_algebra.normalized_projection_ratio(f)):.4f}")

# Large F stays finite through log-space weights.

w = spin_algebra.stretched_state_populations(200)
print("F = 200: %d populations, sum %.12f" % (len(w.populations), w.populations.sum()))
