"""Closed-form alignment response and its phenomenological corrections.

All functions broadcast over numpy arrays. Proportionality constants are 1;
amplitude scales belong to the fitting layer.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core_types import FieldVector, ModifiedModelParams


def _check_gamma(gamma) -> None:
    if not np.all(np.asarray(gamma, float) > 0):
        raise ValueError(f"relaxation rate must be positive, got {gamma!r}")


# Intermediates are carried in extended precision: the rotation numerator is
# a difference of two terms and cancels near its zero lines.
_WORK = np.longdouble


def _split_omega(omega):
    wx, wy, wz = omega
    return (np.asarray(wx, float).astype(_WORK), np.asarray(wy, float).astype(_WORK),
            np.asarray(wz, float).astype(_WORK))


def _maybe_scalar(x):
    x = np.asarray(x).astype(float)
    return float(x) if x.ndim == 0 else x


def s_b_classic(omega: Sequence, gamma: float):
    """Polarization-rotation signal of the linear alignment model.

    Parameters
    ----------
    omega : (wx, wy, wz)
        Angular frequencies (scalars or broadcastable arrays), rate units.
    gamma : float or array
        Common relaxation rate, same units; broadcasts with ``omega``.
    """
    _check_gamma(gamma)
    wx, wy, wz = _split_omega(omega)
    gamma = np.asarray(gamma, float).astype(_WORK)
    g2 = gamma * gamma
    wx2 = wx * wx
    wyz2 = wy * wy + wz * wz
    num = gamma * wz * (g2 + 4 * wx2 + wyz2) - wx * wy * (g2 + 4 * wx2 - 2 * wyz2)
    den = (g2 + wx2 + wyz2) * (g2 + 4 * wx2 + 4 * wyz2)
    return _maybe_scalar(num / den)


def s_t_classic(omega: Sequence, gamma: float):
    """Transmission signal of the linear alignment model."""
    _check_gamma(gamma)
    wx, wy, wz = _split_omega(omega)
    gamma = np.asarray(gamma, float).astype(_WORK)
    g2 = gamma * gamma
    wx2 = wx * wx
    wyz2 = wy * wy + wz * wz
    num = g2 + (wyz2 - 2 * wx2) ** 2 / g2 + 2 * wyz2 + 5 * wx2
    den = (g2 + wx2 + wyz2) * (g2 + 4 * wx2 + 4 * wyz2)
    return _maybe_scalar(num / den)


def effective_b_y(b_y, params: ModifiedModelParams | float, branch_sign: int | None = None):
    """Transverse field seen by the atoms, ``sign(b_y) * sqrt(b_y**2 + b_y0**2)``.

    At ``b_y == 0`` the sign comes from ``branch_sign`` (the remembered branch).
    ``params`` may be a :class:`ModifiedModelParams` or a bare ``b_y0`` in nT.
    """
    if isinstance(params, ModifiedModelParams):
        b_y0 = params.b_y0
        branch = params.branch_sign if branch_sign is None else branch_sign
    else:
        b_y0 = float(params)
        branch = 1 if branch_sign is None else branch_sign
    if b_y0 < 0:
        raise ValueError("b_y0 must be non-negative")
    b_y = np.asarray(b_y, float)
    if not np.all(np.isfinite(b_y)):
        raise ValueError("b_y must be finite")
    sign = np.where(b_y > 0, 1.0, np.where(b_y < 0, -1.0, float(branch)))
    return _maybe_scalar(sign * np.sqrt(b_y * b_y + b_y0 * b_y0))


def _split_field(field):
    if isinstance(field, FieldVector):
        return np.float64(field.b_x), np.float64(field.b_y), np.float64(field.b_z)
    bx, by, bz = field
    return np.asarray(bx, float), np.asarray(by, float), np.asarray(bz, float)


def _corrected_omega(field, params: ModifiedModelParams):
    bx, by, bz = _split_field(field)
    g = params.base.gamma_gyro
    wy = g * np.asarray(effective_b_y(by, params)) / params.k_aniso
    return g * bx, wy, g * bz


def envelope(field, params: ModifiedModelParams):
    """Large-field decay envelope times the active-region mask."""
    bx, by, _ = _split_field(field)
    env = np.maximum(0.0, 1.0 - params.decay_coeff * np.hypot(bx, by))
    if params.active_region is not None:
        env = env * params.active_region.contains(bx, by)
    return env


def s_b_modified(field, params: ModifiedModelParams):
    """Polarization rotation with anisotropy, effective field, decay and mask.

    ``field`` is a :class:`FieldVector` or a ``(b_x, b_y, b_z)`` triple of arrays
    in nT.
    """
    omega = _corrected_omega(field, params)
    return _maybe_scalar(np.asarray(s_b_classic(omega, params.gamma)) * envelope(field, params))


def s_t_modified(field, params: ModifiedModelParams):
    """Transmission counterpart of :func:`s_b_modified`."""
    omega = _corrected_omega(field, params)
    return _maybe_scalar(np.asarray(s_t_classic(omega, params.gamma)) * envelope(field, params))
