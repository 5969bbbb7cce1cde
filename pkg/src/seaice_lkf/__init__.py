"""Viscous-plastic sea-ice dynamics on B, CD1 and CD2 quadrilateral grids."""

__version__ = "0.1.0"
