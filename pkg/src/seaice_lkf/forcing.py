"""Analytic forcing of the moving-cyclone benchmark."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DAY = 86400.0


@dataclass(frozen=True)
class CycloneParams:
    c0: tuple[float, float] = (51.2e3, 51.2e3)        # m
    c_end: tuple[float, float] = (460.8e3, 460.8e3)   # m, position at T_end
    T_end: float = 2 * DAY
    v_max: float = 15.0                               # m/s
    r_scale: float = 100e3                            # m
    alpha_conv: float = 18.0                          # deg

    def __post_init__(self):
        if self.v_max <= 0 or self.r_scale <= 0:
            raise ValueError("cyclone v_max and r_scale must be positive")
        if self.T_end <= 0:
            raise ValueError("T_end must be positive")

    @property
    def c_vel(self) -> np.ndarray:
        return (np.asarray(self.c_end) - np.asarray(self.c0)) / self.T_end

    def center(self, t: float) -> np.ndarray:
        return np.asarray(self.c0, dtype=float) + self.c_vel * t


def wind_field(x, y, t: float, p: CycloneParams = CycloneParams()):
    """Convergent cyclonic vortex translating along the diagonal.

    Speed profile ``v_max (r/R) exp(1 - r/R)`` peaks at ``r = R``; the
    direction is the radial unit vector rotated by ``90 deg + alpha_conv``.
    """
    cx, cy = p.center(t)
    rx = np.asarray(x, dtype=float) - cx
    ry = np.asarray(y, dtype=float) - cy
    r = np.hypot(rx, ry)
    s = r / p.r_scale
    speed = p.v_max * s * np.exp(1.0 - s)
    with np.errstate(invalid="ignore", divide="ignore"):
        ux = np.where(r > 0, rx / r, 0.0)
        uy = np.where(r > 0, ry / r, 0.0)
    th = math.radians(90.0 + p.alpha_conv)
    c, sn = math.cos(th), math.sin(th)
    return speed * (c * ux - sn * uy), speed * (sn * ux + c * uy)


def ocean_field(x, y, L: float, v_max: float = 0.01):
    """Steady circular current ``v_max (2y - L, L - 2x) / L``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return v_max * (2.0 * y - L) / L, v_max * (L - 2.0 * x) / L


def initial_thickness(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 0.3 + 0.005 * (np.sin(6e-5 * x) + np.sin(3e-5 * y))
