# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled (m)EVP subcycling loop.

Mirrors :func:`seaice_lkf._kernels_py.relax` line for line; see there for the
meaning of the arguments.
"""
from libc.math cimport sqrt, isfinite
import numpy as np

DEF MEVP = 0
DEF EVP = 1


def relax(int mode, int n_iter,
          double[:, ::1] vel, const double[:, ::1] vel_n,
          const long[:, ::1] nodes, const double[:, ::1] gx, const double[:, ::1] gy,
          const double[::1] area, const double[::1] P0, double[:, ::1] sig,
          const int[::1] j_ptr, const int[::1] j_idx, const double[::1] j_val,
          const double[::1] j_coef, const long[:, ::1] j_cells, double[:, ::1] tau,
          const double[::1] mass, const unsigned char[::1] free,
          const double[:, ::1] f_const, const double[::1] cw_coef,
          const double[:, ::1] vel_o, const double[::1] f_cor,
          double dt, double e, double dmin, double pfac, double gamma,
          double alpha, double beta, double kappa):
    cdef Py_ssize_t ne = nodes.shape[0]
    cdef Py_ssize_t npts = mass.shape[0]
    cdef Py_ssize_t nj = j_coef.shape[0]
    cdef Py_ssize_t it, el, k, n, i, r, p
    cdef double ei2 = 1.0 / (e * e)
    cdef double dmin2 = dmin * dmin
    cdef double e11, e22, e12, d2, dlt, zeta, eta, P, bulk, t11, t22, t12
    cdef double gxk, gyk, ww, ju, jv, tu, tv, zbar
    cdef double du, dv, speed, cw, a, b, ru, rv, det, un, vn, inc, inc_max = 0.0
    cdef double kd = 0.5 * kappa * e * e
    cdef double tr, dev
    cdef double[:, ::1] force = np.zeros((npts + 1, 2))
    cdef double[::1] zeta_el = np.zeros(ne)

    for it in range(n_iter):
        # element stresses
        for el in range(ne):
            e11 = 0.0
            e22 = 0.0
            e12 = 0.0
            for k in range(4):
                n = nodes[el, k]
                e11 += gx[el, k] * vel[n, 0]
                e22 += gy[el, k] * vel[n, 1]
                e12 += gy[el, k] * vel[n, 0] + gx[el, k] * vel[n, 1]
            e12 *= 0.5
            d2 = (e11 * e11 + e22 * e22) * (1.0 + ei2) + 4.0 * e12 * e12 * ei2 \
                + 2.0 * e11 * e22 * (1.0 - ei2)
            if d2 < 0.0:
                d2 = 0.0
            dlt = sqrt(d2)
            zeta = P0[el] / (2.0 * sqrt(d2 + dmin2))
            zeta_el[el] = zeta
            P = pfac * P0[el] * dlt / (2.0 * (dlt + dmin))
            if mode == MEVP:
                eta = zeta * ei2
                bulk = (zeta - eta) * (e11 + e22) - 0.5 * P
                t11 = 2.0 * eta * e11 + bulk
                t22 = 2.0 * eta * e22 + bulk
                t12 = 2.0 * eta * e12
                sig[el, 0] += (t11 - sig[el, 0]) / alpha
                sig[el, 1] += (t22 - sig[el, 1]) / alpha
                sig[el, 2] += (t12 - sig[el, 2]) / alpha
            else:
                tr = (sig[el, 0] + sig[el, 1] + kappa * (zeta * (e11 + e22) - 0.5 * P)) / (1.0 + 0.5 * kappa)
                dev = (sig[el, 0] - sig[el, 1] + kappa * zeta * (e11 - e22)) / (1.0 + kd)
                sig[el, 0] = 0.5 * (tr + dev)
                sig[el, 1] = 0.5 * (tr - dev)
                sig[el, 2] = (sig[el, 2] + kappa * zeta * e12) / (1.0 + kd)

        for i in range(npts + 1):
            force[i, 0] = 0.0
            force[i, 1] = 0.0
        for el in range(ne):
            ww = area[el]
            for k in range(4):
                n = nodes[el, k]
                gxk = gx[el, k]
                gyk = gy[el, k]
                force[n, 0] -= ww * (sig[el, 0] * gxk + sig[el, 2] * gyk)
                force[n, 1] -= ww * (sig[el, 2] * gxk + sig[el, 1] * gyk)

        # edge-jump penalty, relaxed like the stress
        for r in range(nj):
            ju = 0.0
            jv = 0.0
            for p in range(j_ptr[r], j_ptr[r + 1]):
                ju += j_val[p] * vel[j_idx[p], 0]
                jv += j_val[p] * vel[j_idx[p], 1]
            zbar = 0.5 * (zeta_el[j_cells[r, 0]] + zeta_el[j_cells[r, 1]])
            tu = gamma * zbar * j_coef[r] * ju
            tv = gamma * zbar * j_coef[r] * jv
            if mode == MEVP:
                tau[r, 0] += (tu - tau[r, 0]) / alpha
                tau[r, 1] += (tv - tau[r, 1]) / alpha
            else:
                tau[r, 0] = (tau[r, 0] + kd * tu) / (1.0 + kd)
                tau[r, 1] = (tau[r, 1] + kd * tv) / (1.0 + kd)
            for p in range(j_ptr[r], j_ptr[r + 1]):
                force[j_idx[p], 0] -= j_val[p] * tau[r, 0]
                force[j_idx[p], 1] -= j_val[p] * tau[r, 1]

        # pointwise 2x2 velocity update
        inc_max = 0.0
        for i in range(npts):
            if not free[i]:
                vel[i, 0] = 0.0
                vel[i, 1] = 0.0
                continue
            du = vel_o[i, 0] - vel[i, 0]
            dv = vel_o[i, 1] - vel[i, 1]
            speed = sqrt(du * du + dv * dv)
            cw = cw_coef[i] * speed
            a = beta + 1.0 + dt * cw / mass[i]
            b = dt * f_cor[i]
            ru = beta * vel[i, 0] + vel_n[i, 0] + dt / mass[i] * (force[i, 0] + f_const[i, 0] + cw * vel_o[i, 0])
            rv = beta * vel[i, 1] + vel_n[i, 1] + dt / mass[i] * (force[i, 1] + f_const[i, 1] + cw * vel_o[i, 1])
            det = a * a + b * b
            un = (a * ru + b * rv) / det
            vn = (a * rv - b * ru) / det
            inc = (un - vel[i, 0]) * (un - vel[i, 0]) + (vn - vel[i, 1]) * (vn - vel[i, 1])
            if inc > inc_max:
                inc_max = inc
            vel[i, 0] = un
            vel[i, 1] = vn
        if not isfinite(inc_max):
            return float("nan")
    return sqrt(inc_max)
