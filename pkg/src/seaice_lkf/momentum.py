"""Momentum solvers for one outer time step.

All three schemes discretize the same implicit step::

    M (v - v_n)/dt + M f k x v = f_int(sigma(v)) + A tau_air + A C_w(v) (v_o - v) + M g_tilt

with ``C_w(v) = rho_o C_o |v_o - v|``. Picard solves it by lagging the
viscosities, pressure and drag magnitude; mEVP and EVP reach it by
pseudo-time iteration of stress and velocity.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .discretization import Discretization
from .rheology import RheoParams, Stress, evaluate, ice_strength, vp_stress

log = logging.getLogger(__name__)

VP_PICARD = "VP_PICARD"
EVP = "EVP"
MEVP = "MEVP"
SCHEMES = (VP_PICARD, EVP, MEVP)
DEFAULT_SUBCYCLES = {EVP: 500, MEVP: 100, VP_PICARD: 1}


class SolverBlowup(RuntimeError):
    """Non-finite velocities during a solve."""


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = MEVP
    n_sub: int | None = None
    T_evp: float = 1500.0
    alpha: float = 500.0
    beta: float = 500.0
    picard_tol: float = 1e-6
    picard_max: int = 500
    linear_tol: float = 1e-9
    linear_solver: str = "direct"
    # CD1 edge-jump penalty
    gamma: float = 1.0
    # EVP pseudo time step; None derives it from the elastic wave speed
    evp_dt_sub: float | None = None
    evp_cfl: float = 0.5
    m_min_thickness: float = 1e-4
    backend: str | None = None

    def __post_init__(self):
        scheme = str(self.scheme).upper()
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {', '.join(SCHEMES)}")
        object.__setattr__(self, "scheme", scheme)
        if self.n_sub is None:
            object.__setattr__(self, "n_sub", DEFAULT_SUBCYCLES[scheme])
        if self.n_sub < 1:
            raise ValueError("n_sub must be >= 1")
        for name in ("picard_tol", "linear_tol"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.picard_max < 1:
            raise ValueError("picard_max must be >= 1")
        if self.alpha < 1 or self.beta < 0:
            raise ValueError("alpha must be >= 1 and beta >= 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.T_evp <= 0:
            raise ValueError("T_evp must be positive")
        if self.linear_solver not in ("direct", "bicgstab"):
            raise ValueError("linear_solver must be 'direct' or 'bicgstab'")

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


@dataclass
class Forcing:
    """External forcing sampled at the velocity points."""

    wind: np.ndarray
    ocean: np.ndarray
    f_c: float = 1.46e-4
    rho_a: float = 1.3
    C_a: float = 1.2e-3
    rho_o: float = 1026.0
    C_o: float = 5.5e-3
    tilt: np.ndarray | None = None
    g: float = 9.81

    def __post_init__(self):
        if min(self.rho_a, self.C_a, self.rho_o, self.C_o) < 0:
            raise ValueError("densities and drag coefficients must be non-negative")


def surface_stress(v, f: Forcing):
    """Air plus ocean stress (N/m^2) for ice velocity ``v`` (..., 2)."""
    v = np.asarray(v, dtype=float)
    va = np.asarray(f.wind, dtype=float)
    dv = np.asarray(f.ocean, dtype=float) - v
    tau_a = f.rho_a * f.C_a * np.linalg.norm(va, axis=-1, keepdims=True) * va
    tau_o = f.rho_o * f.C_o * np.linalg.norm(dv, axis=-1, keepdims=True) * dv
    return tau_a + tau_o


@dataclass
class State:
    vel: np.ndarray
    H: np.ndarray
    A: np.ndarray
    sigma: np.ndarray | None = None
    tau: np.ndarray | None = None

    def copy(self) -> "State":
        return State(
            self.vel.copy(), self.H.copy(), self.A.copy(),
            None if self.sigma is None else self.sigma.copy(),
            None if self.tau is None else self.tau.copy(),
        )


@dataclass
class SolveResult:
    vel: np.ndarray
    iterations: int
    residual: float
    converged: bool
    history: list = field(default_factory=list)
    sigma: np.ndarray | None = None
    tau: np.ndarray | None = None


class StepProblem:
    """Frozen-tracer data of one implicit momentum step."""

    def __init__(self, disc: Discretization, state: State, forcing: Forcing, dt: float,
                 rheo: RheoParams, cfg: SolverConfig):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.d = disc
        self.dt = dt
        self.rheo = rheo
        self.cfg = cfg
        self.vel_n = np.asarray(state.vel, dtype=float)
        if self.vel_n.shape != (disc.n_points, 2):
            raise ValueError("state velocity does not match the discretization")
        H = np.asarray(state.H, dtype=float)
        A = np.asarray(state.A, dtype=float)
        self.P0 = disc.to_elements(ice_strength(H, A, rheo))
        mass = disc.lumped(rheo.rho_ice * H)
        self.mass = np.maximum(mass, rheo.rho_ice * cfg.m_min_thickness * disc.point_area)
        SA = disc.lumped(A)
        wind = np.asarray(forcing.wind, dtype=float)
        self.f_const = (forcing.rho_a * forcing.C_a * SA * np.linalg.norm(wind, axis=1))[:, None] * wind
        if forcing.tilt is not None:
            self.f_const = self.f_const + self.mass[:, None] * np.asarray(forcing.tilt, dtype=float)
        self.f_const[disc.boundary] = 0.0
        self.cw_coef = forcing.rho_o * forcing.C_o * SA
        self.vel_o = np.ascontiguousarray(np.asarray(forcing.ocean, dtype=float))
        self.f_cor = np.full(disc.n_points, float(forcing.f_c))
        self.free = disc.free

    # -- nonlinear pieces --------------------------------------------------
    def rheology(self, vel):
        st = self.d.strain(vel)
        return st, evaluate(st.eps, self.P0, self.rheo)

    def residual(self, vel) -> np.ndarray:
        st, r = self.rheology(vel)
        sig = vp_stress(st.eps, r)
        f_int = self.d.divergence(sig, dirichlet=False)
        f_int += self.d.stabilization(vel, r.zeta, self.cfg.gamma, dirichlet=False)
        dvo = self.vel_o - vel
        cw = self.cw_coef * np.linalg.norm(dvo, axis=1)
        m = self.mass[:, None]
        cor = np.column_stack([-vel[:, 1], vel[:, 0]]) * (m * self.f_cor[:, None])
        res = m * (vel - self.vel_n) / self.dt + cor - f_int - self.f_const - cw[:, None] * dvo
        res[~self.free] = 0.0
        return res

    def residual_norm(self, vel) -> float:
        return float(np.linalg.norm(self.residual(vel)))

    # -- Picard linearization --------------------------------------------
    def linear_system(self, vel):
        d = self.d
        st, r = self.rheology(vel)
        W = d.area
        zp = sp.diags(W * (r.zeta + r.eta))
        zm = sp.diags(W * (r.zeta - r.eta))
        et = sp.diags(W * r.eta)
        Bx, By, BxT, ByT = d.Bx, d.By, d.BxT, d.ByT
        Kuu = BxT @ zp @ Bx + ByT @ et @ By
        Kvv = ByT @ zp @ By + BxT @ et @ Bx
        Kuv = BxT @ zm @ By + ByT @ et @ Bx
        Kvu = ByT @ zm @ Bx + BxT @ et @ By
        cw = self.cw_coef * np.linalg.norm(self.vel_o - vel, axis=1)
        diag = sp.diags(self.mass / self.dt + cw)
        cor = sp.diags(self.mass * self.f_cor)
        if len(d.jump_coef):
            w = d.jump_weights(r.zeta, self.cfg.gamma)
            S = d.J.T @ sp.diags(w) @ d.J
            Kuu = Kuu + S
            Kvv = Kvv + S
        Amat = sp.bmat([[diag + Kuu, Kuv - cor], [Kvu + cor, diag + Kvv]], format="csr")
        half_p = W * 0.5 * r.P
        b = np.concatenate([
            self.mass / self.dt * self.vel_n[:, 0] + self.f_const[:, 0] + cw * self.vel_o[:, 0] + BxT @ half_p,
            self.mass / self.dt * self.vel_n[:, 1] + self.f_const[:, 1] + cw * self.vel_o[:, 1] + ByT @ half_p,
        ])
        return Amat, b


def _solve_linear(Amat, b, cfg: SolverConfig, x0):
    if cfg.linear_solver == "direct":
        # minimum-degree ordering on A^T + A is about twice as fast as COLAMD here
        return spla.splu(Amat.tocsc(), permc_spec="MMD_AT_PLUS_A").solve(b)
    dinv = 1.0 / Amat.diagonal()
    M = spla.LinearOperator(Amat.shape, matvec=lambda x: dinv * x)
    x, info = spla.bicgstab(Amat, b, x0=x0, rtol=cfg.linear_tol, atol=0.0, maxiter=20000, M=M)
    if info != 0:
        log.warning("bicgstab did not reach linear_tol (info=%s)", info)
    return x


def picard_vp_solve(disc: Discretization, state: State, forcing: Forcing, dt: float,
                    cfg: SolverConfig, rheo: RheoParams = RheoParams(), vel0=None) -> SolveResult:
    """Implicit VP step by Picard iteration on lagged viscosities and drag."""
    prob = StepProblem(disc, state, forcing, dt, rheo, cfg)
    free = np.flatnonzero(disc.free)
    npts = disc.n_points
    idx = np.concatenate([free, free + npts])
    vel = prob.vel_n.copy() if vel0 is None else np.array(vel0, dtype=float)
    vel[disc.boundary] = 0.0
    r0 = prob.residual_norm(vel)
    history = [r0]
    res = r0
    converged = r0 == 0.0
    it = 0
    while not converged and it < cfg.picard_max:
        Amat, b = prob.linear_system(vel)
        Aff = Amat[idx][:, idx]
        x = _solve_linear(Aff, b[idx], cfg, np.concatenate([vel[free, 0], vel[free, 1]]))
        new = np.zeros_like(vel)
        new[free, 0] = x[: len(free)]
        new[free, 1] = x[len(free):]
        if not np.all(np.isfinite(new)):
            raise SolverBlowup(f"Picard iteration {it + 1} produced non-finite velocities")
        vel = new
        it += 1
        res = prob.residual_norm(vel)
        history.append(res)
        converged = res <= cfg.picard_tol * r0
    if r0 == 0.0:
        it = max(it, 1)
    if not converged:
        log.info("Picard stopped at %d iterations, relative residual %.3e", it, res / r0)
    rel = res / r0 if r0 > 0 else 0.0
    return SolveResult(vel, it, rel, converged, [h / r0 if r0 > 0 else 0.0 for h in history])


def evp_dt_sub(disc: Discretization, cfg: SolverConfig, rheo: RheoParams) -> float:
    """Pseudo time step from the elastic wave speed of the EVP system."""
    if cfg.evp_dt_sub is not None:
        return float(cfg.evp_dt_sub)
    zeta_over_m = rheo.P_star / (2.0 * rheo.Delta_min * rheo.rho_ice)
    c = math.sqrt(zeta_over_m / cfg.T_evp)
    full = disc.area[disc.mesh.cell_nnodes == 4] if hasattr(disc.mesh, "cell_nnodes") else disc.area
    length = math.sqrt(float(np.min(full)))
    return cfg.evp_cfl * length / c


def _subcycle(mode, disc, state, forcing, dt, cfg, rheo, n_iter, alpha, beta, kappa, vel0=None):
    prob = StepProblem(disc, state, forcing, dt, rheo, cfg)
    npts = disc.n_points
    vel = np.zeros((npts + 1, 2))
    vel[:npts] = prob.vel_n if vel0 is None else vel0
    vel[:npts][disc.boundary] = 0.0
    sig = np.zeros((disc.n_elements, 3)) if state.sigma is None else np.array(state.sigma, dtype=float)
    nj = len(disc.jump_coef)
    tau = np.zeros((nj, 2)) if state.tau is None or len(state.tau) != nj else np.array(state.tau, dtype=float)
    J = disc.J
    relax = kernels.get(cfg.backend)
    r0 = prob.residual_norm(prob.vel_n * disc.free[:, None])
    inc = relax(
        mode, int(n_iter), vel, np.ascontiguousarray(prob.vel_n),
        disc.elem_nodes, disc.gx, disc.gy, disc.area, np.ascontiguousarray(prob.P0), sig,
        J.indptr.astype(np.int32), J.indices.astype(np.int32), np.ascontiguousarray(J.data, dtype=float),
        np.ascontiguousarray(disc.jump_coef), np.ascontiguousarray(disc.jump_cells), tau,
        prob.mass, disc.free.astype(np.uint8), np.ascontiguousarray(prob.f_const), prob.cw_coef,
        prob.vel_o, prob.f_cor,
        float(dt), rheo.e, rheo.Delta_min, rheo.pressure_factor, cfg.gamma,
        float(alpha), float(beta), float(kappa),
    )
    out = vel[:npts].copy()
    if not (np.isfinite(inc) and np.all(np.isfinite(out))):
        raise SolverBlowup(
            f"{'EVP' if mode == 1 else 'mEVP'} subcycling produced non-finite velocities "
            f"(max |v| before failure unknown, n_sub={n_iter})"
        )
    res = prob.residual_norm(out)
    rel = res / r0 if r0 > 0 else res
    return SolveResult(out, int(n_iter), rel, True, [inc], sig, tau)


def mevp_solve(disc: Discretization, state: State, forcing: Forcing, dt: float,
               cfg: SolverConfig, rheo: RheoParams = RheoParams(), vel0=None) -> SolveResult:
    """mEVP: ``n_sub`` relaxation iterations with parameters alpha (stress) and beta (velocity).

    The iteration starts from ``state.sigma`` and from ``vel0`` (default: the
    velocity at the start of the step).
    """
    return _subcycle(kernels._kernels_py.MEVP, disc, state, forcing, dt, cfg, rheo,
                     cfg.n_sub, cfg.alpha, cfg.beta, 0.0, vel0)


def evp_solve(disc: Discretization, state: State, forcing: Forcing, dt: float,
              cfg: SolverConfig, rheo: RheoParams = RheoParams(), vel0=None) -> SolveResult:
    """EVP: ``n_sub`` pseudo-time steps of the elastic stress equation.

    The velocity pseudo step keeps the physical inertia term ``(v - v_n)/dt``,
    which makes the steady state of the subcycles the implicit VP step.
    """
    dts = evp_dt_sub(disc, cfg, rheo)
    return _subcycle(kernels._kernels_py.EVP, disc, state, forcing, dt, cfg, rheo,
                     cfg.n_sub, 1.0, dt / dts, dts / cfg.T_evp, vel0)


def momentum_step(disc, state, forcing, dt, cfg: SolverConfig, rheo: RheoParams = RheoParams()) -> SolveResult:
    if cfg.scheme == VP_PICARD:
        return picard_vp_solve(disc, state, forcing, dt, cfg, rheo)
    if cfg.scheme == EVP:
        return evp_solve(disc, state, forcing, dt, cfg, rheo)
    return mevp_solve(disc, state, forcing, dt, cfg, rheo)


def stress_of(result: SolveResult) -> Stress | None:
    if result.sigma is None:
        return None
    return Stress(result.sigma[:, 0], result.sigma[:, 1], result.sigma[:, 2])
