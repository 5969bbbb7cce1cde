"""Pure numpy (m)EVP subcycling loop, used when the compiled module is absent."""
from __future__ import annotations

import numpy as np

MEVP = 0
EVP = 1


def relax(mode, n_iter, vel, vel_n, nodes, gx, gy, area, P0, sig,
          j_ptr, j_idx, j_val, j_coef, j_cells, tau,
          mass, free, f_const, cw_coef, vel_o, f_cor,
          dt, e, dmin, pfac, gamma, alpha, beta, kappa):
    """Run ``n_iter`` pseudo-time iterations in place.

    Parameters
    ----------
    mode : int
        0 for mEVP (relaxation ``1/alpha`` toward the VP stress), 1 for EVP
        (semi-implicit stress equation with ``kappa = dt_sub / T_evp``).
    vel : ndarray (npts + 1, 2)
        Velocity iterate; the last row is a zero pad for wall nodes.
    vel_n : ndarray (npts, 2)
        Velocity at the start of the outer time step.
    nodes, gx, gy, area : element table (see ``Discretization``).
    P0 : ndarray (ne,)
        Ice strength on elements.
    sig : ndarray (ne, 3)
        Stress ``(s11, s22, s12)``, updated in place.
    j_ptr, j_idx, j_val, j_coef, j_cells, tau
        CSR edge-jump functionals, their geometric weights, the two cells of
        each edge and the relaxed jump fluxes (CD1; empty otherwise).
    mass : ndarray (npts,)
        Lumped mass (kg), already floored.
    free : ndarray (npts,) of uint8
        Zero on Dirichlet points.
    f_const : ndarray (npts, 2)
        Force independent of the ice velocity (air stress, tilt), in N.
    cw_coef : ndarray (npts,)
        ``area * A * rho_o * C_o`` per point.
    vel_o : ndarray (npts, 2)
        Ocean velocity.
    f_cor : ndarray (npts,)
        Coriolis parameter.
    beta : float
        Velocity relaxation (``dt / dt_sub`` for EVP).

    Returns
    -------
    float
        Largest velocity increment of the last iteration (nan on blow-up).
    """
    npts = len(mass)
    ei2 = 1.0 / (e * e)
    kd = 0.5 * kappa * e * e
    flat = nodes.ravel()
    gxa = gx * area[:, None]
    gya = gy * area[:, None]
    fr = free.astype(bool)
    nj = len(j_coef)
    rows = np.repeat(np.arange(nj), np.diff(j_ptr)) if nj else None
    inc_max = 0.0

    for _ in range(n_iter):
        vu = vel[:, 0][nodes]
        vv = vel[:, 1][nodes]
        e11 = (gx * vu).sum(axis=1)
        e22 = (gy * vv).sum(axis=1)
        e12 = 0.5 * ((gy * vu).sum(axis=1) + (gx * vv).sum(axis=1))
        d2 = np.maximum((e11 * e11 + e22 * e22) * (1.0 + ei2) + 4.0 * e12 * e12 * ei2
                        + 2.0 * e11 * e22 * (1.0 - ei2), 0.0)
        dlt = np.sqrt(d2)
        zeta = P0 / (2.0 * np.sqrt(d2 + dmin * dmin))
        P = pfac * P0 * dlt / (2.0 * (dlt + dmin))
        if mode == MEVP:
            eta = zeta * ei2
            bulk = (zeta - eta) * (e11 + e22) - 0.5 * P
            sig[:, 0] += (2.0 * eta * e11 + bulk - sig[:, 0]) / alpha
            sig[:, 1] += (2.0 * eta * e22 + bulk - sig[:, 1]) / alpha
            sig[:, 2] += (2.0 * eta * e12 - sig[:, 2]) / alpha
        else:
            tr = (sig[:, 0] + sig[:, 1] + kappa * (zeta * (e11 + e22) - 0.5 * P)) / (1.0 + 0.5 * kappa)
            dev = (sig[:, 0] - sig[:, 1] + kappa * zeta * (e11 - e22)) / (1.0 + kd)
            sig[:, 0] = 0.5 * (tr + dev)
            sig[:, 1] = 0.5 * (tr - dev)
            sig[:, 2] = (sig[:, 2] + kappa * zeta * e12) / (1.0 + kd)

        fx = -np.bincount(flat, (gxa * sig[:, 0:1] + gya * sig[:, 2:3]).ravel(), minlength=npts + 1)
        fy = -np.bincount(flat, (gxa * sig[:, 2:3] + gya * sig[:, 1:2]).ravel(), minlength=npts + 1)

        if nj:
            ju = np.bincount(rows, j_val * vel[j_idx, 0], minlength=nj)
            jv = np.bincount(rows, j_val * vel[j_idx, 1], minlength=nj)
            w = gamma * 0.5 * (zeta[j_cells[:, 0]] + zeta[j_cells[:, 1]]) * j_coef
            if mode == MEVP:
                tau[:, 0] += (w * ju - tau[:, 0]) / alpha
                tau[:, 1] += (w * jv - tau[:, 1]) / alpha
            else:
                tau[:, 0] = (tau[:, 0] + kd * w * ju) / (1.0 + kd)
                tau[:, 1] = (tau[:, 1] + kd * w * jv) / (1.0 + kd)
            fx -= np.bincount(j_idx, j_val * tau[rows, 0], minlength=npts + 1)
            fy -= np.bincount(j_idx, j_val * tau[rows, 1], minlength=npts + 1)

        u, v = vel[:npts, 0], vel[:npts, 1]
        du = vel_o[:, 0] - u
        dv = vel_o[:, 1] - v
        cw = cw_coef * np.sqrt(du * du + dv * dv)
        a = beta + 1.0 + dt * cw / mass
        b = dt * f_cor
        ru = beta * u + vel_n[:, 0] + dt / mass * (fx[:npts] + f_const[:, 0] + cw * vel_o[:, 0])
        rv = beta * v + vel_n[:, 1] + dt / mass * (fy[:npts] + f_const[:, 1] + cw * vel_o[:, 1])
        det = a * a + b * b
        un = np.where(fr, (a * ru + b * rv) / det, 0.0)
        vn = np.where(fr, (a * rv - b * ru) / det, 0.0)
        inc = (un - u) ** 2 + (vn - v) ** 2
        inc_max = float(inc[fr].max()) if fr.any() else 0.0
        vel[:npts, 0] = un
        vel[:npts, 1] = vn
        if not np.isfinite(inc_max):
            return float("nan")
    return float(np.sqrt(inc_max))
