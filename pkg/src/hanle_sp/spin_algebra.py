"""Angular-momentum bookkeeping for a state stretched along y.

Quantum numbers are accepted as ints, floats or :class:`fractions.Fraction`
and stored internally as the integer ``2F``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

_EXACT_LIMIT = 64


def two_f(f) -> int:
    """Return the integer ``2F``; reject anything that is not a positive half-integer."""
    tf = Fraction(f) * 2
    if tf.denominator != 1 or tf <= 0:
        raise ValueError(f"F must be a positive integer or half-integer, got {f!r}")
    return int(tf)


@dataclass(frozen=True)
class SublevelDistribution:
    """Populations over ``m = -F .. F`` (ascending)."""

    twice_f: int
    populations: np.ndarray

    def __post_init__(self) -> None:
        if len(self.populations) != self.twice_f + 1:
            raise ValueError("populations must have 2F+1 entries")
        if np.any(self.populations < 0):
            raise ValueError("populations must be non-negative")
        if abs(float(np.sum(self.populations)) - 1.0) > 1e-12:
            raise ValueError("populations must sum to 1")

    @property
    def f(self) -> Fraction:
        return Fraction(self.twice_f, 2)

    @property
    def m_values(self) -> np.ndarray:
        return (np.arange(self.twice_f + 1) - self.twice_f / 2.0).astype(float)

    def moment(self, power: int = 2) -> float:
        return float(np.sum(self.m_values**power * self.populations))


def binomial_weights_exact(f) -> list[Fraction]:
    """Exact ``C(2F, F+m) / 2**(2F)`` for ``m = -F .. F``."""
    n = two_f(f)
    denom = 2**n
    return [Fraction(math.comb(n, k), denom) for k in range(n + 1)]


def stretched_state_populations(f) -> SublevelDistribution:
    """Populations along x of the state ``|F, F>_y``.

    Uses exact integer arithmetic up to ``2F = 64`` and log-space evaluation
    beyond.
    """
    n = two_f(f)
    if n <= _EXACT_LIMIT:
        pops = np.array([float(w) for w in binomial_weights_exact(f)])
    else:
        k = np.arange(n + 1)
        logw = (
            math.lgamma(n + 1)
            - np.array([math.lgamma(i + 1) + math.lgamma(n - i + 1) for i in k])
            - n * math.log(2.0)
        )
        pops = np.exp(logw)
        pops /= pops.sum()
    return SublevelDistribution(n, pops)


def wigner_small_d(f, beta: float) -> np.ndarray:
    """Wigner small-d matrix ``d^F_{m', m}(beta)`` from the explicit factorial sum.

    Rows and columns are ordered by ascending ``m'`` and ``m``.
    """
    n = two_f(f)
    c, s = math.cos(beta / 2.0), math.sin(beta / 2.0)
    d = np.zeros((n + 1, n + 1))
    # Work with integer offsets a = F + m' and b = F + m.
    for a in range(n + 1):
        for b in range(n + 1):
            jpm1, jmm1 = a, n - a  # F + m', F - m'
            jpm, jmm = b, n - b  # F + m, F - m
            pref = math.sqrt(
                math.factorial(jpm1) * math.factorial(jmm1) * math.factorial(jpm) * math.factorial(jmm)
            )
            total = 0.0
            # k runs over integers keeping every factorial argument non-negative
            for k in range(max(0, b - a), min(jpm, jmm1) + 1):
                num = (-1) ** (a - b + k)
                den = (
                    math.factorial(jpm - k)
                    * math.factorial(k)
                    * math.factorial(jmm1 - k)
                    * math.factorial(a - b + k)
                )
                total += num / den * c ** (n - a + b - 2 * k) * s ** (a - b + 2 * k)
            d[a, b] = pref * total
    return d


def second_moment_x(f) -> Fraction:
    """``<F_x^2> = F/2`` for the state stretched along y."""
    return Fraction(two_f(f), 4)


def second_moment_from_populations(f) -> Fraction:
    """Exact ``sum m^2 P(m)`` over the binomial populations."""
    n = two_f(f)
    return sum(
        (Fraction(k * 2 - n, 2) ** 2 * w for k, w in enumerate(binomial_weights_exact(f))),
        Fraction(0),
    )


def second_moment_y(f) -> Fraction:
    """``<F_y^2> = F^2`` for the state stretched along y."""
    return Fraction(two_f(f), 2) ** 2


def quasi_alignment_moment(f) -> Fraction:
    """``3<F_x^2> - F(F+1)``, which equals ``-F(2F-1)/2``."""
    F = Fraction(two_f(f), 2)
    return 3 * second_moment_x(f) - F * (F + 1)


def normalized_projection_ratio(f) -> Fraction:
    """Alignment per unit orientation, each normalized to its maximum.

    Alignment is scaled by ``F(F+1)`` and orientation by ``F``, giving
    ``-(2F-1) / (2(F+1))``.
    """
    F = Fraction(two_f(f), 2)
    alignment = quasi_alignment_moment(f) / (F * (F + 1))
    orientation = F / F  # <F_y> = F in the stretched state
    return alignment / orientation


#: Magnitude of the projection coefficient suggested for Cs F=4.
CS_XI = float(abs(normalized_projection_ratio(4)))
