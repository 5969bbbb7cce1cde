"""Conservative donor-cell transport of thickness and concentration.

Tracers live on the primal cells. Fluxes are computed on primal faces from
the face-normal velocity. B-grid faces average their two end vertices;
CD-grid faces read the stored edge-midpoint velocity directly. The walls are
closed: boundary faces carry no flux.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import Discretization, discretization
from .grid import PRIMAL, Grid, Staggering


class CFLViolation(ValueError):
    """Raised when a transport step would exceed the donor-cell CFL bound."""

    def __init__(self, ratio: float, limit: float = 1.0):
        self.ratio = float(ratio)
        super().__init__(f"CFL violation: outflow Courant number {self.ratio:.4g} exceeds {limit:g}")


@dataclass(frozen=True)
class TracerFields:
    """Cell mean thickness ``H`` (m) and concentration ``A`` on primal cells."""

    H: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        A = np.asarray(self.A, dtype=float)
        if H.shape != A.shape:
            raise ValueError(f"H and A shapes differ: {H.shape} vs {A.shape}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "A", A)

    def volume(self, grid: Grid) -> float:
        return float(np.sum(self.H * np.asarray(grid.cell_areas)))


@dataclass(frozen=True)
class FaceSpeeds:
    """Normal velocity on primal faces.

    ``x_faces`` has shape ``(ny, nx + 1)`` (faces normal to x, positive
    eastward); ``y_faces`` has shape ``(ny + 1, nx)`` (normal to y, positive
    northward).
    """

    x_faces: np.ndarray
    y_faces: np.ndarray

    @property
    def max_speed(self) -> float:
        return float(max(np.abs(self.x_faces).max(initial=0.0), np.abs(self.y_faces).max(initial=0.0)))


def face_normal_velocity(s, grid: Grid, v) -> FaceSpeeds:
    """Face-normal speeds for velocity ``v`` given at the points of staggering ``s``."""
    if grid.kind != PRIMAL:
        raise ValueError("transport runs on the primal grid")
    d: Discretization = discretization(grid, Staggering.parse(s))
    v = np.asarray(v, dtype=float)
    if v.shape != (d.n_points, 2):
        raise ValueError(f"velocity shape {v.shape} does not match {d.staggering.value} ({d.n_points} points)")
    flat = d.face_normal_velocity(v)
    return faces_from_edges(grid, flat)


def faces_from_edges(grid: Grid, flat) -> FaceSpeeds:
    """Split a per-edge array (grid edge order) into the two face families."""
    nx, ny = grid.nx, grid.ny
    nxe = nx * (ny + 1)
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (grid.n_edges,):
        raise ValueError(f"expected {grid.n_edges} edge values, got shape {flat.shape}")
    return FaceSpeeds(flat[nxe:].reshape(ny, nx + 1).copy(), flat[:nxe].reshape(ny + 1, nx).copy())


def courant_number(faces: FaceSpeeds, grid: Grid, dt: float) -> float:
    """Largest fraction of a cell's content leaving it in one step."""
    u = faces.x_faces.copy()
    v = faces.y_faces.copy()
    u[:, 0] = u[:, -1] = 0.0
    v[0, :] = v[-1, :] = 0.0
    out = (np.maximum(u[:, 1:], 0.0) + np.maximum(-u[:, :-1], 0.0)) / grid.h
    out = out + (np.maximum(v[1:, :], 0.0) + np.maximum(-v[:-1, :], 0.0)) / grid.hy
    return float(dt * out.max(initial=0.0))


def _donor_update(q: np.ndarray, u: np.ndarray, v: np.ndarray, grid: Grid, dt: float) -> np.ndarray:
    fx = np.zeros_like(u)
    fy = np.zeros_like(v)
    # interior faces only; walls stay closed
    ui = u[:, 1:-1]
    fx[:, 1:-1] = np.where(ui > 0, ui * q[:, :-1], ui * q[:, 1:])
    vi = v[1:-1, :]
    fy[1:-1, :] = np.where(vi > 0, vi * q[:-1, :], vi * q[1:, :])
    return q - dt * ((fx[:, 1:] - fx[:, :-1]) / grid.h + (fy[1:, :] - fy[:-1, :]) / grid.hy)


def upwind_step(t: TracerFields, faces: FaceSpeeds, grid: Grid, dt: float,
                clamp: bool = True) -> TracerFields:
    """Advance ``H`` and ``A`` by one donor-cell step.

    Parameters
    ----------
    t : TracerFields
        Cell values, flat arrays in cell order (``j * nx + i``).
    faces : FaceSpeeds
        Normal speeds on the primal faces.
    dt : float
        Time step (s).
    clamp : bool
        Clip ``A`` to ``[0, 1]`` after the update.

    Raises
    ------
    CFLViolation
        If the outflow Courant number of any cell exceeds one.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    nx, ny = grid.nx, grid.ny
    if t.H.shape != (nx * ny,):
        raise ValueError(f"tracer shape {t.H.shape} does not match grid ({nx * ny} cells)")
    if faces.x_faces.shape != (ny, nx + 1) or faces.y_faces.shape != (ny + 1, nx):
        raise ValueError("face speed arrays do not match the grid")
    c = courant_number(faces, grid, dt)
    if c > 1.0:
        raise CFLViolation(c)
    H = _donor_update(t.H.reshape(ny, nx), faces.x_faces, faces.y_faces, grid, dt).ravel()
    A = _donor_update(t.A.reshape(ny, nx), faces.x_faces, faces.y_faces, grid, dt).ravel()
    if clamp:
        A = np.clip(A, 0.0, 1.0)
    return TracerFields(H, A)
