"""Radial spectral laboratory for the focusing biharmonic NLS i u_t = Δ²u − μΔu − |u|^{2σ}u."""

from .core import Criticality, Field, Params, RadialGrid, make_grid, make_params, norms

__version__ = "0.1.0"

__all__ = ["Criticality", "Field", "Params", "RadialGrid", "make_grid", "make_params", "norms", "__version__"]
