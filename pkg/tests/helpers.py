"""Shared small problems for the solver tests."""
import numpy as np

from seaice_lkf.discretization import discretization
from seaice_lkf.forcing import initial_thickness, ocean_field, wind_field
from seaice_lkf.grid import build_quad_grid
from seaice_lkf.momentum import Forcing, State

SMALL = build_quad_grid(128e3, 8e3)


def small_problem(s, grid=SMALL):
    """16 x 16 box with the benchmark's thickness, a cyclone edge and the ocean gyre."""
    d = discretization(grid, s)
    x, y = np.asarray(grid.cell_centers).T
    st = State(d.zeros(), initial_thickness(x, y), np.ones(grid.n_cells))
    F = Forcing(d.sample(lambda x, y: wind_field(x + 192e3, y + 192e3, 0.0)),
                d.sample(lambda x, y: ocean_field(x, y, grid.L)))
    return d, st, F


def ridge_image(width=3, n=256, length=50, background=1e-7, contrast=10.0, noise=0.0, seed=0,
                diagonal=False, cross=False, vertical=False):
    """Synthetic shear image: one straight ridge (or an X / plus) on a flat background.

    ``length`` is in pixels, so a 50 px ridge is 100 km long at 2 km pixels.
    ``noise`` adds uniform noise with that fraction of the ridge amplitude.
    """
    f = np.full((n, n), background)
    c = n // 2
    lo = c - length // 2
    top = background * contrast
    if diagonal:
        for k in range(length):
            for d in range(-(width // 2), width - width // 2):
                f[lo + k + d, lo + k] = top
    else:
        f[c - width // 2:c - width // 2 + width, lo:lo + length] = top
    if cross:
        f[lo:lo + length, c - width // 2:c - width // 2 + width] = top
    if vertical:
        f = f.T.copy()
    if noise:
        f = f + noise * top * np.random.default_rng(seed).random(f.shape)
    return f
