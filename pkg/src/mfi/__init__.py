"""Monotone function intervals and their economic applications on grids."""

from .cdf_core import (
    PiecewiseCdf,
    CdfError,
    EmptyIntervalError,
    dirac,
    linear_cdf,
    mix,
    fosd_leq,
    rank_slice,
    step_cdf,
    step_from_atoms,
    truncation_bounds,
    uniform_grid_cdf,
)

__version__ = "0.1.0"
