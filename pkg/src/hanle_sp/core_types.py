"""Shared value types and unit conventions.

Fields are in nanotesla. Rates and angular frequencies share one unit, 1/s in
the linear-frequency convention, so ``omega_i = gamma_gyro * b_i`` with
``gamma_gyro`` in Hz/nT and no factors of 2*pi anywhere.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Sequence

import numpy as np

#: Gyromagnetic ratio of Cs, Hz/nT.
CS_GAMMA_GYRO = 3.5


def _require_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


class _ValueRecord:
    """Dict round-tripping for the frozen dataclasses below."""

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]):
        return cls(**data)


@dataclass(frozen=True)
class FieldVector(_ValueRecord):
    """Magnetic field in nT."""

    b_x: float = 0.0
    b_y: float = 0.0
    b_z: float = 0.0

    def __post_init__(self) -> None:
        for f in fields(self):
            _require_finite(f.name, getattr(self, f.name))

    def as_array(self) -> np.ndarray:
        return np.array([self.b_x, self.b_y, self.b_z], dtype=float)

    @property
    def b_xy(self) -> float:
        return math.hypot(self.b_x, self.b_y)


@dataclass(frozen=True)
class ModelRates(_ValueRecord):
    """Relaxation, gain and coupling constants of the spin model.

    ``pump_rate`` and ``a_x`` are tied by ``|a_x| = pump_rate / gamma2``.
    Give either one; ``a_x`` may carry a negative sign to encode negative
    alignment along the pump polarization. When neither is given the pumped
    alignment is set to 1.
    """

    gamma1: float
    gamma2: float
    chi: float = 0.0
    eta: float = 0.0
    alpha: float = 0.0
    xi: float = 0.0
    pump_rate: float | None = None
    a_x: float | None = None
    gamma_gyro: float = CS_GAMMA_GYRO

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None:
                _require_finite(f.name, v)
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ValueError("gamma1 and gamma2 must be positive")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.pump_rate is None and self.a_x is None:
            object.__setattr__(self, "pump_rate", self.gamma2)
            object.__setattr__(self, "a_x", 1.0)
        elif self.a_x is None:
            object.__setattr__(self, "a_x", self.pump_rate / self.gamma2)
        elif self.pump_rate is None:
            object.__setattr__(self, "pump_rate", abs(self.a_x) * self.gamma2)
        if self.pump_rate < 0:
            raise ValueError("pump_rate must be non-negative")
        expected = self.pump_rate / self.gamma2
        if not math.isclose(abs(self.a_x), expected, rel_tol=1e-12, abs_tol=1e-300):
            raise ValueError(
                f"|a_x|={abs(self.a_x)!r} inconsistent with pump_rate/gamma2={expected!r}"
            )

    @classmethod
    def from_pump(cls, pump_rate: float, gamma1: float, gamma2: float, **kw) -> "ModelRates":
        """Build rates with the stationary alignment ``a_x = pump_rate / gamma2``."""
        return cls(gamma1=gamma1, gamma2=gamma2, pump_rate=pump_rate, **kw)

    def with_alignment(self, a_x: float) -> "ModelRates":
        """Copy with a new pumped alignment; ``pump_rate`` follows."""
        return replace(self, a_x=a_x, pump_rate=abs(a_x) * self.gamma2)


@dataclass(frozen=True)
class SpinState(_ValueRecord):
    """Transverse alignment (a_y, a_z) and orientation (p_y, p_z)."""

    a_y: float = 0.0
    a_z: float = 0.0
    p_y: float = 0.0
    p_z: float = 0.0

    def __post_init__(self) -> None:
        for f in fields(self):
            _require_finite(f.name, getattr(self, f.name))

    def as_array(self) -> np.ndarray:
        return np.array([self.a_y, self.a_z, self.p_y, self.p_z], dtype=float)

    @classmethod
    def from_array(cls, y: Sequence[float]) -> "SpinState":
        a_y, a_z, p_y, p_z = (float(v) for v in y)
        return cls(a_y, a_z, p_y, p_z)


@dataclass(frozen=True)
class HalfPlane(_ValueRecord):
    """Points with ``n_x*b_x + n_y*b_y >= offset`` (nT)."""

    n_x: float
    n_y: float
    offset: float = 0.0

    def contains(self, b_x, b_y):
        return self.n_x * np.asarray(b_x) + self.n_y * np.asarray(b_y) >= self.offset


@dataclass(frozen=True)
class Sector(_ValueRecord):
    """Angular sector, counter-clockwise from ``theta_min`` to ``theta_max``.

    Angles in degrees from the +b_x axis; optional radial limits in nT.
    """

    theta_min: float
    theta_max: float
    r_min: float = 0.0
    r_max: float = math.inf

    def contains(self, b_x, b_y):
        b_x = np.asarray(b_x, dtype=float)
        b_y = np.asarray(b_y, dtype=float)
        r = np.hypot(b_x, b_y)
        span = (self.theta_max - self.theta_min) % 360.0
        if span == 0.0 and self.theta_max != self.theta_min:
            span = 360.0
        rel = (np.degrees(np.arctan2(b_y, b_x)) - self.theta_min) % 360.0
        return (rel <= span) & (r >= self.r_min) & (r <= self.r_max)


@dataclass(frozen=True)
class ActiveRegion(_ValueRecord):
    """Union of half-planes and sectors where the signal is kept."""

    shapes: tuple[HalfPlane | Sector, ...] = ()

    def contains(self, b_x, b_y):
        b_x, b_y = np.broadcast_arrays(np.asarray(b_x, float), np.asarray(b_y, float))
        inside = np.zeros(b_x.shape, dtype=bool)
        for shape in self.shapes:
            inside |= shape.contains(b_x, b_y)
        return inside

    def to_dict(self) -> dict[str, Any]:
        return {
            "shapes": [
                {"type": type(s).__name__, **asdict(s)} for s in self.shapes
            ]
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ActiveRegion":
        kinds = {"HalfPlane": HalfPlane, "Sector": Sector}
        shapes = []
        for item in data["shapes"]:
            item = dict(item)
            shapes.append(kinds[item.pop("type")](**item))
        return cls(tuple(shapes))


@dataclass(frozen=True)
class ModifiedModelParams(_ValueRecord):
    """Phenomenological corrections applied on top of the reference response.

    The reference relaxation rate is ``base.gamma2``. ``k_aniso`` is the ratio
    of the resonance widths along y and x. ``active_region=None`` keeps the
    whole field plane.
    """

    base: ModelRates
    k_aniso: float = 1.0
    b_y0: float = 0.0
    decay_coeff: float = 0.0
    active_region: ActiveRegion | None = None
    branch_sign: int = 1

    def __post_init__(self) -> None:
        for name in ("k_aniso", "b_y0", "decay_coeff"):
            _require_finite(name, getattr(self, name))
        if self.k_aniso <= 0:
            raise ValueError("k_aniso must be positive")
        if self.b_y0 < 0 or self.decay_coeff < 0:
            raise ValueError("b_y0 and decay_coeff must be non-negative")
        if self.branch_sign not in (-1, 1):
            raise ValueError("branch_sign must be -1 or +1")

    @property
    def gamma(self) -> float:
        return self.base.gamma2

    def to_dict(self) -> dict[str, Any]:
        return {
            "base": self.base.to_dict(),
            "k_aniso": self.k_aniso,
            "b_y0": self.b_y0,
            "decay_coeff": self.decay_coeff,
            "active_region": None if self.active_region is None else self.active_region.to_dict(),
            "branch_sign": self.branch_sign,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModifiedModelParams":
        data = dict(data)
        data["base"] = ModelRates.from_dict(data["base"])
        if data.get("active_region") is not None:
            data["active_region"] = ActiveRegion.from_dict(data["active_region"])
        return cls(**data)


@dataclass(frozen=True)
class Omega:
    """Angular-frequency triple in the rate unit."""

    x: float
    y: float
    z: float = 0.0

    @property
    def yz_sq(self) -> float:
        return self.y * self.y + self.z * self.z

    def __iter__(self):
        return iter((self.x, self.y, self.z))


def omega_from_field(b: FieldVector, rates: ModelRates | float) -> Omega:
    """Convert a field in nT to angular frequencies ``gamma * b``.

    ``rates`` may be a :class:`ModelRates` or a bare gyromagnetic ratio.
    """
    g = rates.gamma_gyro if isinstance(rates, ModelRates) else float(rates)
    _require_finite("gamma_gyro", g)
    return Omega(g * b.b_x, g * b.b_y, g * b.b_z)


def field_from_omega(omega: Omega | Sequence[float], rates: ModelRates | float) -> FieldVector:
    g = rates.gamma_gyro if isinstance(rates, ModelRates) else float(rates)
    if g == 0:
        raise ValueError("gamma_gyro must be nonzero to invert")
    wx, wy, wz = omega
    return FieldVector(wx / g, wy / g, wz / g)
