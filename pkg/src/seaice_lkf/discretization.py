"""Staggering-specific discrete operators.

All three staggerings are reduced to one representation: a list of elements,
each with up to four velocity nodes, the constant gradient of every nodal
basis function at the element centroid (one-point quadrature) and the element
area. Strain rates, the weak stress divergence and lumped masses are then the
same code for B, CD1 and CD2:

* B    -- bilinear element on every primal cell, nodes at the vertices;
* CD1  -- rotated-bilinear nonconforming element on every primal cell, nodes
  at the edge midpoints, plus an edge-jump penalty;
* CD2  -- the B-grid construction applied verbatim to the diamond mesh.
"""
from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .grid import DIAMOND, PRIMAL, Grid, Staggering, build_diamond_mesh
from .rheology import StrainRate, Stress


class ElementStrain(NamedTuple):
    e11: np.ndarray
    e22: np.ndarray
    e12: np.ndarray
    area: np.ndarray

    @property
    def eps(self) -> StrainRate:
        return StrainRate(self.e11, self.e22, self.e12)


def conforming_gradients(corners: np.ndarray, nnodes: np.ndarray):
    """Basis gradients at the centroid for bilinear quads and linear triangles."""
    ne = len(corners)
    gx = np.zeros((ne, 4))
    gy = np.zeros((ne, 4))

    quad = nnodes == 4
    if quad.any():
        p = corners[quad]
        # reference corners (-1,-1), (1,-1), (1,1), (-1,1); derivatives at 0
        dxi = np.array([-0.25, 0.25, 0.25, -0.25])
        deta = np.array([-0.25, -0.25, 0.25, 0.25])
        j11 = p[:, :, 0] @ dxi
        j12 = p[:, :, 0] @ deta
        j21 = p[:, :, 1] @ dxi
        j22 = p[:, :, 1] @ deta
        det = j11 * j22 - j12 * j21
        # grad = J^{-T} (dN/dxi, dN/deta)
        gx[quad] = (j22[:, None] * dxi - j21[:, None] * deta) / det[:, None]
        gy[quad] = (-j12[:, None] * dxi + j11[:, None] * deta) / det[:, None]

    tri = nnodes == 3
    if tri.any():
        p = corners[tri, :3]
        x, y = p[:, :, 0], p[:, :, 1]
        det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            gx[tri, a] = (y[:, b] - y[:, c]) / det
            gy[tri, a] = (x[:, c] - x[:, b]) / det
    return gx, gy


class Discretization:
    """Operators of one staggering on one primal grid.

    Velocity arrays have shape ``(n_points, 2)``. ``elem_nodes`` uses the
    padding index ``n_points`` for unused slots and wall corners, so kernels
    can index a velocity vector extended by one zero entry.
    """

    def __init__(self, grid: Grid, staggering):
        s = Staggering.parse(staggering)
        if grid.kind not in (PRIMAL, DIAMOND):
            raise ValueError(f"unknown grid kind {grid.kind!r}")
        if s is Staggering.CD2 and grid.kind == DIAMOND:
            raise ValueError("CD2 expects the primal grid; use B on the diamond mesh instead")
        if s is Staggering.CD1 and grid.kind != PRIMAL:
            raise ValueError("CD1 needs a primal-quad grid")
        self.grid = grid
        self.staggering = s

        if s is Staggering.CD1:
            self.mesh = grid
            self.points = grid.edge_midpoints
            self.boundary = np.asarray(grid.edge_boundary)
            nodes = np.asarray(grid.cell_edges)  # S E N W
            gx = np.zeros((grid.n_cells, 4))
            gy = np.zeros((grid.n_cells, 4))
            gx[:, 1], gx[:, 3] = 1.0 / grid.h, -1.0 / grid.h
            gy[:, 2], gy[:, 0] = 1.0 / grid.hy, -1.0 / grid.hy
            nnodes = np.full(grid.n_cells, 4)
        else:
            self.mesh = build_diamond_mesh(grid) if s is Staggering.CD2 else grid
            m = self.mesh
            self.points = np.asarray(m.vertices)
            self.boundary = np.asarray(m.vertex_boundary)
            nodes = np.asarray(m.cell_nodes)
            nnodes = np.asarray(m.cell_nnodes)
            gx, gy = conforming_gradients(np.asarray(m.cell_corners), nnodes)

        npts = len(self.points)
        self.n_points = npts
        self.n_elements = len(nodes)
        slot_used = np.arange(4)[None, :] < nnodes[:, None]
        real = slot_used & (nodes >= 0)
        self.elem_nodes = np.ascontiguousarray(np.where(real, nodes, npts).astype(np.int64))
        self.gx = np.ascontiguousarray(np.where(slot_used, gx, 0.0))
        self.gy = np.ascontiguousarray(np.where(slot_used, gy, 0.0))
        self.area = np.ascontiguousarray(np.asarray(self.mesh.cell_areas, dtype=float))
        self.tracer_map = self.mesh.tracer_map.tocsr()
        self.free = ~self.boundary

        rows = np.repeat(np.arange(self.n_elements), 4)[real.ravel()]
        cols = nodes.ravel()[real.ravel()]
        shape = (self.n_elements, npts)
        self.Bx = sp.csr_matrix((self.gx.ravel()[real.ravel()], (rows, cols)), shape=shape)
        self.By = sp.csr_matrix((self.gy.ravel()[real.ravel()], (rows, cols)), shape=shape)
        self.BxT = self.Bx.T.tocsr()
        self.ByT = self.By.T.tocsr()

        # lumping: element integral shared equally among its real nodes
        nreal = real.sum(axis=1)
        share = (self.area / nreal)[:, None] * np.ones((1, 4))
        self.lump = sp.csr_matrix((share.ravel()[real.ravel()], (cols, rows)), shape=(npts, self.n_elements))
        self.cell_to_point = (self.lump @ self.tracer_map).tocsr()
        self.point_area = np.asarray(self.lump.sum(axis=1)).ravel()

        self._build_jumps()
        self._build_faces()

    # ------------------------------------------------------------------
    def _build_jumps(self):
        """Edge-jump functionals of the rotated-bilinear element (CD1 only).

        On an interior edge the trace jump of each velocity component is
        ``A t + B t^2`` in the edge coordinate ``t in [-1, 1]``; ``A`` and
        ``B`` are linear in the nodal values. The penalty integrand is then
        ``a (2/3 A A' + 2/5 B B')`` with ``a`` the half edge length.
        """
        g = self.grid
        if self.staggering is not Staggering.CD1:
            self.J = sp.csr_matrix((0, self.n_points))
            self.jump_coef = np.zeros(0)
            self.jump_cells = np.zeros((0, 2), dtype=np.int64)
            return
        interior = np.flatnonzero(~g.edge_boundary)
        nxe = g.nx * (g.ny + 1)
        ce = np.asarray(g.cell_edges)
        S, E, N, W = range(4)

        def coeffs(c):
            # c1 = (uE-uW)/2, c2 = (uN-uS)/2, c3 = (uE+uW-uN-uS)/4 as {edge: weight}
            e = ce[c]
            return (
                {e[E]: 0.5, e[W]: -0.5},
                {e[N]: 0.5, e[S]: -0.5},
                {e[E]: 0.25, e[W]: 0.25, e[N]: -0.25, e[S]: -0.25},
            )

        rows, cols, vals = [], [], []
        coef, cells = [], []
        for r, edge in enumerate(interior):
            k1, k2 = g.edge_cells[edge]
            horizontal = edge < nxe
            a1, a2 = coeffs(k1), coeffs(k2)
            lin = 0 if horizontal else 1
            half = 0.5 * (g.h if horizontal else g.hy)
            dist = g.hy if horizontal else g.h
            for comp, (w1, w2), c in ((0, (a1[lin], a2[lin]), 2.0 / 3.0), (1, (a1[2], a2[2]), 2.0 / 5.0)):
                acc: dict[int, float] = {}
                for k, w in w1.items():
                    acc[k] = acc.get(k, 0.0) + w
                for k, w in w2.items():
                    acc[k] = acc.get(k, 0.0) - w
                for k, w in acc.items():
                    if w != 0.0:
                        rows.append(2 * r + comp)
                        cols.append(k)
                        vals.append(w)
                coef.append(c * half / dist)
                cells.append((k1, k2))
        self.J = sp.csr_matrix((vals, (rows, cols)), shape=(2 * len(interior), self.n_points))
        self.jump_coef = np.array(coef)
        self.jump_cells = np.array(cells, dtype=np.int64)

    def _build_faces(self):
        """Primal face-normal velocity as a sparse map from (u, v) stacked."""
        g = self.grid
        if g.kind != PRIMAL:
            self.face_normal_op = None
            return
        ne = g.n_edges
        nxe = g.nx * (g.ny + 1)
        npts = self.n_points
        horizontal = np.arange(ne) < nxe
        if self.staggering is Staggering.B:
            a, b = g.edges[:, 0], g.edges[:, 1]
            rows = np.concatenate([np.arange(ne)] * 2)
            colp = np.concatenate([a, b])
            comp = np.where(np.concatenate([horizontal] * 2), npts, 0)
            self.face_normal_op = sp.csr_matrix((np.full(2 * ne, 0.5), (rows, colp + comp)), shape=(ne, 2 * npts))
        else:
            comp = np.where(horizontal, npts, 0)
            self.face_normal_op = sp.csr_matrix(
                (np.ones(ne), (np.arange(ne), np.arange(ne) + comp)), shape=(ne, 2 * npts)
            )

    # ------------------------------------------------------------------
    def strain(self, vel: np.ndarray) -> ElementStrain:
        u, v = vel[:, 0], vel[:, 1]
        e11 = self.Bx @ u
        e22 = self.By @ v
        e12 = 0.5 * (self.By @ u + self.Bx @ v)
        return ElementStrain(e11, e22, e12, self.area)

    def divergence(self, sigma: Stress, dirichlet: bool = True) -> np.ndarray:
        s11, s22, s12 = (np.asarray(x, dtype=float) * self.area for x in sigma)
        f = np.empty((self.n_points, 2))
        f[:, 0] = -(self.BxT @ s11 + self.ByT @ s12)
        f[:, 1] = -(self.BxT @ s12 + self.ByT @ s22)
        if dirichlet:
            f[self.boundary] = 0.0
        return f

    def jump_weights(self, zeta: np.ndarray, gamma: float) -> np.ndarray:
        if len(self.jump_coef) == 0:
            return self.jump_coef
        zbar = 0.5 * (zeta[self.jump_cells[:, 0]] + zeta[self.jump_cells[:, 1]])
        return gamma * zbar * self.jump_coef

    def stabilization(self, vel: np.ndarray, zeta: np.ndarray, gamma: float, dirichlet: bool = True) -> np.ndarray:
        if gamma < 0:
            raise ValueError("stabilization parameter gamma must be >= 0")
        f = np.zeros((self.n_points, 2))
        if self.staggering is not Staggering.CD1:
            return f
        w = self.jump_weights(np.asarray(zeta, dtype=float), gamma)
        JT = self.J.T
        f[:, 0] = -(JT @ (w * (self.J @ vel[:, 0])))
        f[:, 1] = -(JT @ (w * (self.J @ vel[:, 1])))
        if dirichlet:
            f[self.boundary] = 0.0
        return f

    def lumped(self, cell_field: np.ndarray) -> np.ndarray:
        """Integral of a primal-cell field lumped onto the velocity points."""
        return self.cell_to_point @ np.asarray(cell_field, dtype=float)

    def to_elements(self, cell_field: np.ndarray) -> np.ndarray:
        """Area-weighted average of a primal-cell field on each element."""
        return self.tracer_map @ np.asarray(cell_field, dtype=float)

    def face_normal_velocity(self, vel: np.ndarray) -> np.ndarray:
        return self.face_normal_op @ np.concatenate([vel[:, 0], vel[:, 1]])

    def sample(self, fn) -> np.ndarray:
        """Evaluate ``fn(x, y) -> (u, v)`` at the velocity points."""
        u, v = fn(self.points[:, 0], self.points[:, 1])
        out = np.empty((self.n_points, 2))
        out[:, 0] = u
        out[:, 1] = v
        return out

    def zeros(self) -> np.ndarray:
        return np.zeros((self.n_points, 2))


@lru_cache(maxsize=32)
def discretization(grid: Grid, staggering) -> Discretization:
    return Discretization(grid, Staggering.parse(staggering))


def _check(v, d: Discretization):
    v = np.asarray(v, dtype=float)
    if v.shape != (d.n_points, 2):
        raise ValueError(
            f"velocity shape {v.shape} does not match staggering {d.staggering.value} "
            f"({d.n_points} points)"
        )
    return v


def compute_strain(s, grid: Grid, v) -> ElementStrain:
    d = discretization(grid, s)
    return d.strain(_check(v, d))


def stress_divergence(s, grid: Grid, sigma: Stress, dirichlet: bool = True) -> np.ndarray:
    d = discretization(grid, s)
    if len(np.asarray(sigma[0]).reshape(-1)) not in (1, d.n_elements):
        raise ValueError("stress does not match the element set of this staggering")
    sig = Stress(*(np.broadcast_to(np.asarray(x, dtype=float), (d.n_elements,)) for x in sigma))
    return d.divergence(sig, dirichlet=dirichlet)


def cd1_stabilization(grid: Grid, v, zeta, gamma: float, dirichlet: bool = True) -> np.ndarray:
    if gamma < 0:
        raise ValueError("stabilization parameter gamma must be >= 0")
    d = discretization(grid, Staggering.CD1)
    zeta = np.broadcast_to(np.asarray(getattr(zeta, "zeta", zeta), dtype=float), (d.n_elements,))
    return d.stabilization(_check(v, d), zeta, gamma, dirichlet=dirichlet)


def lumped_mass(s, grid: Grid, m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise ValueError("mass per area must be non-negative")
    return discretization(grid, s).lumped(np.broadcast_to(m, (grid.n_primal_cells,)))
