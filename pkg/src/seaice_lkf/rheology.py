"""Pointwise viscous-plastic constitutive kernels.

Every function broadcasts over numpy arrays so the same code evaluates a
single quadrature point or a whole mesh.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class RheoParams:
    rho_ice: float = 900.0
    P_star: float = 27500.0
    C: float = 20.0
    e: float = 2.0
    Delta_min: float = 2e-9
    # multiplies the replacement pressure; 1 reproduces P0*D/(2(D+Dmin))
    pressure_factor: float = 1.0

    def __post_init__(self):
        for name in ("rho_ice", "P_star", "C", "e", "Delta_min", "pressure_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"RheoParams.{name} must be positive")
        if self.e < 1:
            raise ValueError("RheoParams.e must be >= 1")
        if self.pressure_factor not in (1.0, 2.0):
            raise ValueError("RheoParams.pressure_factor must be 1 or 2")


class StrainRate(NamedTuple):
    e11: np.ndarray | float
    e22: np.ndarray | float
    e12: np.ndarray | float


class Stress(NamedTuple):
    s11: np.ndarray | float
    s22: np.ndarray | float
    s12: np.ndarray | float


class RheologyEval(NamedTuple):
    Delta: np.ndarray | float
    zeta: np.ndarray | float
    eta: np.ndarray | float
    P0: np.ndarray | float
    P: np.ndarray | float


def delta(eps: StrainRate, p: RheoParams) -> np.ndarray:
    e11, e22, e12 = (np.asarray(x, dtype=float) for x in eps)
    ei2 = 1.0 / p.e**2
    d2 = (e11**2 + e22**2) * (1.0 + ei2) + 4.0 * e12**2 * ei2 + 2.0 * e11 * e22 * (1.0 - ei2)
    return np.sqrt(np.maximum(d2, 0.0))


def ice_strength(H, A, p: RheoParams) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    A = np.asarray(A, dtype=float)
    if np.any(H < 0):
        raise ValueError("ice thickness must be non-negative")
    if np.any((A < 0) | (A > 1)):
        raise ValueError("ice concentration must lie in [0, 1]")
    return p.P_star * H * np.exp(-p.C * (1.0 - A))


def viscosities(Delta, P0, p: RheoParams):
    zeta = np.asarray(P0, dtype=float) / (2.0 * np.sqrt(np.asarray(Delta, dtype=float) ** 2 + p.Delta_min**2))
    return zeta, zeta / p.e**2


def replacement_pressure(Delta, P0, p: RheoParams) -> np.ndarray:
    Delta = np.asarray(Delta, dtype=float)
    return p.pressure_factor * np.asarray(P0, dtype=float) * Delta / (2.0 * (Delta + p.Delta_min))


def evaluate(eps: StrainRate, P0, p: RheoParams) -> RheologyEval:
    """Delta, viscosities and pressures for a strain rate and ice strength."""
    d = delta(eps, p)
    zeta, eta = viscosities(d, P0, p)
    return RheologyEval(d, zeta, eta, np.asarray(P0, dtype=float), replacement_pressure(d, P0, p))


def vp_stress(eps: StrainRate, r: RheologyEval) -> Stress:
    """sigma = 2 eta eps + (zeta - eta) tr(eps) I - P/2 I."""
    e11, e22, e12 = eps
    tr = e11 + e22
    bulk = (r.zeta - r.eta) * tr - 0.5 * r.P
    return Stress(2.0 * r.eta * e11 + bulk, 2.0 * r.eta * e22 + bulk, 2.0 * r.eta * e12)


def evp_stress_update(sigma: Stress, eps: StrainRate, r: RheologyEval, T_evp: float,
                      dt_sub: float, p: RheoParams) -> Stress:
    """One pseudo-time step of the elastic-viscous-plastic stress equation.

    Terms in sigma are taken at the new level and the strain rate is frozen,
    so the step is unconditionally stable. The trace and deviator decouple::

        tr:   d(tr s)/dt + tr s/(2T) + P/(2T)  = zeta tr(eps)/T
        dev:  d(s')/dt   + e^2 s'/(2T)          = zeta eps'/T
    """
    if not (dt_sub > 0 and T_evp > 0):
        raise ValueError("dt_sub and T_evp must be positive")
    s11, s22, s12 = sigma
    e11, e22, e12 = eps
    k = dt_sub / T_evp
    kd = 0.5 * k * p.e**2
    tr = (s11 + s22 + k * (r.zeta * (e11 + e22) - 0.5 * r.P)) / (1.0 + 0.5 * k)
    dev = (s11 - s22 + k * r.zeta * (e11 - e22)) / (1.0 + kd)
    s12n = (s12 + k * r.zeta * e12) / (1.0 + kd)
    return Stress(0.5 * (tr + dev), 0.5 * (tr - dev), s12n)


def mevp_stress_update(sigma: Stress, eps: StrainRate, r: RheologyEval, alpha: float) -> Stress:
    """Relax sigma toward the VP stress by ``1/alpha``."""
    if not alpha >= 1:
        raise ValueError("alpha must be >= 1")
    target = vp_stress(eps, r)
    return Stress(*(s + (t - s) / alpha for s, t in zip(sigma, target)))


def shear_deformation(eps: StrainRate) -> np.ndarray:
    e11, e22, e12 = (np.asarray(x, dtype=float) for x in eps)
    return np.sqrt((e11 - e22) ** 2 + 4.0 * e12**2)
