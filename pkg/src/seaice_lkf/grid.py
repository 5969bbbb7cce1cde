"""Structured quadrilateral meshes and the rotated "diamond" mesh.

Index conventions
-----------------
* cells are row-major: ``c = j * nx + i``
* vertices are row-major: ``v = j * (nx + 1) + i``
* edges: all horizontal (x-) edges first, ``e = j * nx + i`` for
  ``j in [0, ny]``, then vertical (y-) edges,
  ``e = nx * (ny + 1) + j * (nx + 1) + i`` for ``j in [0, ny)``.
* the four edges of a cell are stored as ``[S, E, N, W]`` and its four
  vertices as ``[SW, SE, NE, NW]``.

A diamond mesh reuses the same :class:`Grid` container. Its vertices are the
primal edge midpoints (in primal edge order) and its cells are the
cell-centred diamonds, the vertex-centred diamonds and the triangles cut by the
domain boundary. Node index ``-1`` in ``cell_nodes`` marks a domain corner that
is not a mesh vertex; it always carries the wall value zero.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

PRIMAL = "primal-quad"
DIAMOND = "diamond"


class Staggering(str, Enum):
    B = "B"
    CD1 = "CD1"
    CD2 = "CD2"

    @property
    def velocity_entity(self) -> str:
        return "vertex" if self is Staggering.B else "edge"

    @classmethod
    def parse(cls, value) -> "Staggering":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(
                f"unknown staggering {value!r}; expected one of B, CD1, CD2"
            ) from None


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    """Immutable mesh description.

    Attributes
    ----------
    L : float
        Side length of the square domain (m).
    h, hy : float
        Cell sides in x and y (m). ``hy == h`` unless an anisotropic grid was
        requested.
    nx, ny : int
        Primal cell counts per axis. A diamond mesh keeps the counts of the
        primal grid it was derived from.
    kind : str
        ``"primal-quad"`` or ``"diamond"``.
    vertices : ndarray (nv, 2)
    vertex_boundary : ndarray (nv,) of bool
    cell_nodes : ndarray (nc, 4) of int
        Cell corner nodes counter-clockwise; ``-1`` is a wall corner and
        ``cell_nnodes`` tells how many slots are used (3 or 4).
    cell_corners : ndarray (nc, 4, 2)
        Corner coordinates, including wall corners.
    cell_centers, cell_areas : ndarray
    edges : ndarray (ne, 2) of int
        Edge end vertices.
    edge_cells : ndarray (ne, 2) of int
        Cells on either side of each edge, ``-1`` outside the domain.
    cell_edges : ndarray (nc, 4) of int
        Primal only: cell edges ``[S, E, N, W]``.
    tracer_map : scipy.sparse.csr_matrix (nc, N_primal)
        Area fractions of primal cells covering each cell. Identity for a
        primal grid.
    """

    L: float
    h: float
    hy: float
    nx: int
    ny: int
    kind: str
    vertices: np.ndarray
    vertex_boundary: np.ndarray
    cell_nodes: np.ndarray
    cell_nnodes: np.ndarray
    cell_corners: np.ndarray
    cell_centers: np.ndarray
    cell_areas: np.ndarray
    edges: np.ndarray
    edge_cells: np.ndarray
    edge_boundary: np.ndarray
    cell_edges: np.ndarray | None = None
    tracer_map: sp.csr_matrix | None = field(default=None, repr=False)
    # primal vertex -> diamond cell centred on it (diamond meshes only)
    vertex_cell: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_cells(self) -> int:
        return len(self.cell_nodes)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_primal_cells(self) -> int:
        return self.nx * self.ny

    @property
    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def describe(self) -> dict:
        """JSON-ready metadata."""
        return {
            "kind": self.kind,
            "L": self.L,
            "h": self.h,
            "hy": self.hy,
            "nx": self.nx,
            "ny": self.ny,
            "cells": self.n_cells,
            "vertices": self.n_vertices,
            "edges": self.n_edges,
            "boundary_vertices": int(self.vertex_boundary.sum()),
            "boundary_edges": int(self.edge_boundary.sum()),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.describe(), **kw)

    # -- primal index helpers -------------------------------------------------
    def xedge(self, i, j):
        return j * self.nx + i

    def yedge(self, i, j):
        return self.nx * (self.ny + 1) + j * (self.nx + 1) + i

    def vertex(self, i, j):
        return j * (self.nx + 1) + i

    def cell(self, i, j):
        return j * self.nx + i

    def locate_cells(self, x, y) -> np.ndarray:
        """Index of the cell containing each point (ties go to the cell diamond)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        i = np.clip((x // self.h).astype(int), 0, self.nx - 1)
        j = np.clip((y // self.hy).astype(int), 0, self.ny - 1)
        if self.kind == PRIMAL:
            return j * self.nx + i
        xi = (x - (i + 0.5) * self.h) / (0.5 * self.h)
        eta = (y - (j + 0.5) * self.hy) / (0.5 * self.hy)
        inside = np.abs(xi) + np.abs(eta) <= 1.0
        vi = i + (xi > 0)
        vj = j + (eta > 0)
        corner = self.vertex_cell[vj * (self.nx + 1) + vi]
        return np.where(inside, j * self.nx + i, corner)


def _edge_arrays(nx: int, ny: int):
    nxe = nx * (ny + 1)
    ne = nxe + (nx + 1) * ny
    edges = np.empty((ne, 2), dtype=np.int64)
    edge_cells = np.full((ne, 2), -1, dtype=np.int64)

    jj, ii = np.meshgrid(np.arange(ny + 1), np.arange(nx), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    edges[:nxe, 0] = jj * (nx + 1) + ii
    edges[:nxe, 1] = jj * (nx + 1) + ii + 1
    # below / above
    edge_cells[:nxe, 0] = np.where(jj > 0, (jj - 1) * nx + ii, -1)
    edge_cells[:nxe, 1] = np.where(jj < ny, jj * nx + ii, -1)

    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx + 1), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    edges[nxe:, 0] = jj * (nx + 1) + ii
    edges[nxe:, 1] = (jj + 1) * (nx + 1) + ii
    # left / right
    edge_cells[nxe:, 0] = np.where(ii > 0, jj * nx + ii - 1, -1)
    edge_cells[nxe:, 1] = np.where(ii < nx, jj * nx + ii, -1)
    return edges, edge_cells


def build_quad_grid(L: float, h: float, hy: float | None = None) -> Grid:
    """Uniform quadrilateral grid on ``[0, L]^2``.

    ``hy`` gives an anisotropic grid (used for the same-dof B-grid with twice
    the cells of the base grid); by default cells are square.
    """
    if not (L > 0 and h > 0):
        raise ValueError(f"L and h must be positive, got L={L}, h={h}")
    hy = h if hy is None else hy
    if hy <= 0:
        raise ValueError(f"hy must be positive, got {hy}")
    nx, ny = _divide(L, h, "h"), _divide(L, hy, "hy")

    xs = np.arange(nx + 1) * h
    ys = np.arange(ny + 1) * hy
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    vb = np.zeros((ny + 1, nx + 1), dtype=bool)
    vb[0, :] = vb[-1, :] = vb[:, 0] = vb[:, -1] = True

    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    sw = jj * (nx + 1) + ii
    cell_nodes = np.column_stack([sw, sw + 1, sw + nx + 2, sw + nx + 1])
    centers = np.column_stack([(ii + 0.5) * h, (jj + 0.5) * hy])

    edges, edge_cells = _edge_arrays(nx, ny)
    nxe = nx * (ny + 1)
    cell_edges = np.column_stack([
        jj * nx + ii,                      # S
        nxe + jj * (nx + 1) + ii + 1,      # E
        (jj + 1) * nx + ii,                # N
        nxe + jj * (nx + 1) + ii,          # W
    ])
    n = nx * ny
    return Grid(
        L=float(L), h=float(h), hy=float(hy), nx=nx, ny=ny, kind=PRIMAL,
        vertices=_frozen(vertices),
        vertex_boundary=_frozen(vb.ravel()),
        cell_nodes=_frozen(cell_nodes),
        cell_nnodes=_frozen(np.full(n, 4)),
        cell_corners=_frozen(vertices[cell_nodes]),
        cell_centers=_frozen(centers),
        cell_areas=_frozen(np.full(n, h * hy)),
        edges=_frozen(edges),
        edge_cells=_frozen(edge_cells),
        edge_boundary=_frozen((edge_cells < 0).any(axis=1)),
        cell_edges=_frozen(cell_edges),
        tracer_map=sp.identity(n, format="csr"),
    )


def _divide(L, h, name):
    ratio = L / h
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"L/{name} must be an integer, got L={L}, {name}={h} (ratio {ratio:.6g})")
    return n


def build_diamond_mesh(grid: Grid) -> Grid:
    """Rotated mesh whose vertices are the edge midpoints of ``grid``.

    Cells, in order: one diamond per primal cell (row-major), one diamond per
    interior primal vertex (row-major), then one triangle per boundary primal
    vertex (row-major). Triangles at non-corner boundary vertices join three
    edge midpoints; corner triangles use the wall corner as third node.
    """
    if grid.kind != PRIMAL:
        raise ValueError("diamond mesh needs a primal-quad grid")
    nx, ny, h, hy = grid.nx, grid.ny, grid.h, grid.hy
    mid = grid.edge_midpoints
    xe, ye = grid.xedge, grid.yedge

    nodes, nnodes, corners, parents = [], [], [], []

    for c in range(nx * ny):
        s, e, n, w = grid.cell_edges[c]
        nodes.append([s, e, n, w])
        nnodes.append(4)
        corners.append(mid[[s, e, n, w]])
        parents.append({c: 1.0})

    vertex_cell = np.full((ny + 1) * (nx + 1), -1, dtype=np.int64)
    for j in range(1, ny):
        for i in range(1, nx):
            ring = [xe(i, j), ye(i, j), xe(i - 1, j), ye(i, j - 1)]  # E N W S
            vertex_cell[grid.vertex(i, j)] = len(nodes)
            nodes.append(ring)
            nnodes.append(4)
            corners.append(mid[ring])
            cells = [grid.cell(i - 1, j - 1), grid.cell(i, j - 1), grid.cell(i, j), grid.cell(i - 1, j)]
            parents.append({c: 0.25 for c in cells})

    for j in range(ny + 1):
        for i in range(nx + 1):
            if 0 < i < nx and 0 < j < ny:
                continue
            p = grid.vertices[grid.vertex(i, j)]
            # spokes in counter-clockwise angular order: E, N, W, S
            spokes = [
                xe(i, j) if i < nx else None,
                ye(i, j) if j < ny else None,
                xe(i - 1, j) if i > 0 else None,
                ye(i, j - 1) if j > 0 else None,
            ]
            ring = [s for s in spokes if s is not None]
            cells = [
                grid.cell(ci, cj)
                for ci, cj in ((i - 1, j - 1), (i, j - 1), (i, j), (i - 1, j))
                if 0 <= ci < nx and 0 <= cj < ny
            ]
            vertex_cell[grid.vertex(i, j)] = len(nodes)
            if len(ring) == 3:
                # straight wall: E/W spokes are collinear with the vertex
                pts = mid[ring]
            else:
                # corner: the two spokes plus the wall corner itself
                ring = _ccw_corner(ring, mid, p)
                pts = np.array([mid[ring[0]], mid[ring[1]], p])
                ring = ring + [-1]
            nodes.append(ring + [-1] * (4 - len(ring)))
            nnodes.append(3)
            corners.append(np.vstack([pts, np.full((4 - len(pts), 2), np.nan)]))
            parents.append({c: 1.0 / len(cells) for c in cells})

    cell_nodes = np.array(nodes, dtype=np.int64)
    cell_nnodes = np.array(nnodes, dtype=np.int64)
    cell_corners = np.array(corners)
    areas = np.array([_polygon_area(cc[:k]) for cc, k in zip(cell_corners, cell_nnodes)])
    centers = np.array([cc[:k].mean(axis=0) for cc, k in zip(cell_corners, cell_nnodes)])

    rows, cols, vals = [], [], []
    for r, par in enumerate(parents):
        for c, wgt in par.items():
            rows.append(r)
            cols.append(c)
            vals.append(wgt)
    tmap = sp.csr_matrix((vals, (rows, cols)), shape=(len(nodes), nx * ny))

    edges, edge_cells, edge_boundary = _element_edges(cell_nodes, cell_nnodes)
    vb = grid.edge_boundary.copy()

    return Grid(
        L=grid.L, h=h, hy=hy, nx=nx, ny=ny, kind=DIAMOND,
        vertices=_frozen(mid),
        vertex_boundary=_frozen(vb),
        cell_nodes=_frozen(cell_nodes),
        cell_nnodes=_frozen(cell_nnodes),
        cell_corners=_frozen(cell_corners),
        cell_centers=_frozen(centers),
        cell_areas=_frozen(areas),
        edges=_frozen(edges),
        edge_cells=_frozen(edge_cells),
        edge_boundary=_frozen(edge_boundary),
        tracer_map=tmap,
        vertex_cell=_frozen(vertex_cell),
    )


def _ccw_corner(ring, mid, p):
    a, b = ring
    va, vb = mid[a] - p, mid[b] - p
    cross = va[0] * vb[1] - va[1] * vb[0]
    return [a, b] if cross > 0 else [b, a]


def _polygon_area(pts) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _element_edges(cell_nodes, cell_nnodes):
    """Sides of every cell between two real mesh vertices."""
    found: dict[tuple[int, int], list[int]] = {}
    for c, (ring, k) in enumerate(zip(cell_nodes, cell_nnodes)):
        for a in range(k):
            p, q = int(ring[a]), int(ring[(a + 1) % k])
            if p < 0 or q < 0:
                continue
            found.setdefault((min(p, q), max(p, q)), []).append(c)
    keys = sorted(found)
    edges = np.array(keys, dtype=np.int64).reshape(-1, 2)
    edge_cells = np.full((len(keys), 2), -1, dtype=np.int64)
    for r, key in enumerate(keys):
        cs = found[key]
        edge_cells[r, : len(cs)] = cs
    return edges, edge_cells, edge_cells[:, 1] < 0


# --------------------------------------------------------------------------
# degree-of-freedom accounting


@dataclass(frozen=True)
class DofReport:
    """Velocity/tracer DOF counts.

    ``velocity_dof`` uses the interior (periodic-like) formulas, 8N/2 for the
    CD grids and 8N/4 for the B-grid. The ``*_exact`` fields count every
    velocity component including the boundary, and ``velocity_dof_free``
    excludes the Dirichlet wall.
    """

    staggering: str
    cells: int
    velocity_dof: int
    tracer_dof: int
    velocity_points_exact: int
    velocity_dof_exact: int
    velocity_dof_free: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def dof_counts(grid: Grid, s) -> DofReport:
    s = Staggering.parse(s)
    if grid.kind != PRIMAL:
        raise ValueError("dof_counts expects a primal-quad grid")
    n = grid.n_primal_cells
    if s is Staggering.B:
        interior = 8 * n // 4
        points = grid.n_vertices
        free = int((~grid.vertex_boundary).sum())
    else:
        interior = 8 * n // 2
        points = grid.n_edges
        free = int((~grid.edge_boundary).sum())
    return DofReport(
        staggering=s.value,
        cells=n,
        velocity_dof=interior,
        tracer_dof=2 * n,
        velocity_points_exact=points,
        velocity_dof_exact=2 * points,
        velocity_dof_free=2 * free,
    )


def dof_formula(n_cells: int, s) -> int:
    """Interior velocity DOF count for ``n_cells`` cells."""
    s = Staggering.parse(s)
    return 8 * n_cells // (4 if s is Staggering.B else 2)


def diamond_side(h: float) -> float:
    return h / math.sqrt(2.0)
