"""Nondecreasing right-continuous functions on a finite grid.

The single carrier type is :class:`PiecewiseCdf`: a nondecreasing,
right-continuous function represented by breakpoints, the values taken at
those breakpoints, and optional explicit left limits (needed wherever the
function jumps).  Two kinds are supported:

* ``Step``: constant on each half-open cell ``[x_i, x_{i+1})``.
* ``PiecewiseLinear``: linear on the open cell, rising from ``values[i]``
  to the left limit at ``x_{i+1}`` and then jumping (if at all) to
  ``values[i+1]``.

Outside the grid the function takes the declared lower tail (0 for CDFs)
below ``x_0`` and stays at ``values[-1]`` at and above ``x_M``.

Besides evaluation and generalized inverses, the module provides pointwise
mixing, first-order stochastic dominance checks, and the left/right
truncations of a prior at a quantile level, including their perturbed
(epsilon) variants with an explicit empty-interval signal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "STEP",
    "PIECEWISE_LINEAR",
    "CdfError",
    "EmptyIntervalError",
    "PiecewiseCdf",
    "step_cdf",
    "linear_cdf",
    "dirac",
    "uniform_grid_cdf",
    "step_from_atoms",
    "mix",
    "fosd_leq",
    "truncation_bounds",
    "rank_slice",
    "default_tolerance",
]

STEP = "step"
PIECEWISE_LINEAR = "piecewise_linear"

#: Default absolute tolerance for pointwise comparisons.  Dominance checks
#: on merged grids accumulate rounding from mixing, so exact comparison is
#: too brittle; callers may override per call.
DEFAULT_TOL = 1e-9


def default_tolerance() -> float:
    return DEFAULT_TOL


class CdfError(ValueError):
    """Malformed monotone function or invalid operation on one."""


class EmptyIntervalError(CdfError):
    """The requested perturbed truncation interval is empty."""


def _as_array(xs: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.asarray(xs, dtype=float)
    if arr.ndim != 1:
        raise CdfError("expected a one-dimensional array")
    return arr


@dataclass(frozen=True)
class PiecewiseCdf:
    """A nondecreasing right-continuous function on a finite grid.

    Attributes
    ----------
    grid:
        Strictly increasing breakpoints ``x_0 < ... < x_M``.
    values:
        Function values at the breakpoints, nondecreasing.
    kind:
        ``"step"`` or ``"piecewise_linear"``.
    left_limits:
        Explicit left limits at every breakpoint.  ``None`` selects the
        kind's convention: the previous value for steps (the lower tail at
        ``x_0``), the breakpoint value itself for piecewise-linear.
    lower_tail:
        Value taken below ``x_0``; 0 for CDFs.
    """

    grid: np.ndarray
    values: np.ndarray
    kind: str = STEP
    left_limits: np.ndarray | None = None
    lower_tail: float = 0.0

    def __post_init__(self) -> None:
        grid = _as_array(self.grid)
        values = _as_array(self.values)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if self.kind not in (STEP, PIECEWISE_LINEAR):
            raise CdfError(f"unknown kind {self.kind!r}")
        if grid.size == 0 or grid.size != values.size:
            raise CdfError("grid and values must be nonempty and equal length")
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise CdfError("grid breakpoints must be strictly increasing")
        if np.any(np.diff(values) < -DEFAULT_TOL):
            raise CdfError("values must be nondecreasing")
        if self.left_limits is not None:
            lls = _as_array(self.left_limits)
            object.__setattr__(self, "left_limits", lls)
            if lls.size != grid.size:
                raise CdfError("left_limits must match the grid length")
            if np.any(lls > values + DEFAULT_TOL):
                raise CdfError("left limits cannot exceed the values")
            prev = np.concatenate(([self.lower_tail], values[:-1]))
            if np.any(lls < prev - DEFAULT_TOL):
                raise CdfError("left limits cannot undercut preceding values")
            if self.kind == STEP and np.any(np.abs(lls - prev) > DEFAULT_TOL):
                raise CdfError("step functions cannot carry mass between breakpoints")
        if self.values[0] < self.lower_tail - DEFAULT_TOL:
            raise CdfError("first value lies below the declared lower tail")

    # -- structural helpers -------------------------------------------------

    @property
    def n_cells(self) -> int:
        return self.grid.size - 1

    def left_limit_array(self) -> np.ndarray:
        """Left limits at every breakpoint under the kind's convention."""
        if self.left_limits is not None:
            return self.left_limits
        if self.kind == STEP:
            return np.concatenate(([self.lower_tail], self.values[:-1]))
        return self.values.copy()

    def is_cdf(self, tol: float = DEFAULT_TOL) -> bool:
        v = self.values
        return (
            abs(self.lower_tail) <= tol
            and v[0] >= -tol
            and abs(v[-1] - 1.0) <= tol
        )

    def require_cdf(self) -> None:
        if not self.is_cdf():
            raise CdfError("operation requires a CDF (tail 0, top value 1)")

    # -- evaluation ----------------------------------------------------------

    def evaluate(self, x: float | np.ndarray, side: str = "right"):
        """Evaluate ``H(x)`` (right) or the left limit ``H(x-)`` (left).

        Below ``x_0`` both sides return the lower tail; at and above
        ``x_M`` the function stays at ``values[-1]``.
        """
        if side not in ("right", "left"):
            raise CdfError(f"side must be 'right' or 'left', got {side!r}")
        scalar = np.isscalar(x)
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(xs)
        lls = self.left_limit_array()
        grid, values = self.grid, self.values
        idx = np.searchsorted(grid, xs, side="right") - 1
        below = idx < 0
        out[below] = self.lower_tail
        inside = ~below
        ii = idx[inside]
        if self.kind == STEP:
            out[inside] = values[ii]
        else:
            last = grid.size - 1
            nxt = np.minimum(ii + 1, last)
            x0 = grid[ii]
            span = np.where(nxt > ii, grid[nxt] - x0, 1.0)
            t = np.clip((xs[inside] - x0) / span, 0.0, 1.0)
            interp = values[ii] + t * (lls[nxt] - values[ii])
            out[inside] = np.where(ii == last, values[last], interp)
        if side == "left":
            safe = np.clip(idx, 0, grid.size - 1)
            at_node = inside & (grid[safe] == xs)
            out[at_node] = lls[idx[at_node]]
        if scalar:
            return float(out[0])
        return out

    def __call__(self, x, side: str = "right"):
        return self.evaluate(x, side)

    def quantile(self, tau: float, side: str = "lower") -> float:
        """Generalized inverse ``G^{-1}(tau)`` (lower) or ``G^{-1}(tau+)`` (upper).

        ``lower`` returns ``inf{x : G(x) >= tau}``; ``upper`` returns the
        right limit of the quantile function, ``inf{x : G(x) > tau}``.
        Requires a CDF and ``tau`` strictly inside (0, 1).
        """
        if not (0.0 < tau < 1.0):
            raise CdfError(f"quantile level must lie in (0,1), got {tau}")
        self.require_cdf()
        if side not in ("lower", "upper"):
            raise CdfError(f"side must be 'lower' or 'upper', got {side!r}")
        grid, values = self.grid, self.values
        lls = self.left_limit_array()
        strict = side == "upper"
        for i in range(grid.size):
            hit = values[i] > tau if strict else values[i] >= tau
            if not hit:
                continue
            if i == 0:
                return float(grid[0])
            # Crossing happened at node i, inside cell (i-1, i), or earlier
            # along the segment ending in lls[i].
            seg_top = lls[i]
            seg_hit = seg_top > tau if strict else seg_top >= tau
            if not seg_hit or self.kind == STEP:
                return float(grid[i])
            lo = values[i - 1]
            if seg_top <= lo:
                return float(grid[i])
            t = (tau - lo) / (seg_top - lo)
            if t <= 0.0:
                return float(grid[i - 1])
            if t >= 1.0:
                return float(grid[i])
            return float(grid[i - 1] + t * (grid[i] - grid[i - 1]))
        return float(grid[-1])

    # -- measure access -------------------------------------------------------

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Atom positions and masses for a step CDF."""
        if self.kind != STEP:
            raise CdfError("atoms() requires a step function")
        prev = np.concatenate(([self.lower_tail], self.values[:-1]))
        return self.grid.copy(), self.values - prev

    # -- grid surgery ----------------------------------------------------------

    def refine(self, extra_nodes: Iterable[float]) -> "PiecewiseCdf":
        """Insert breakpoints without changing the function."""
        extra = np.asarray(sorted(set(float(x) for x in extra_nodes)), dtype=float)
        extra = extra[(extra > self.grid[0]) & (extra < self.grid[-1])]
        extra = np.setdiff1d(extra, self.grid)
        if extra.size == 0:
            return self
        new_grid = np.union1d(self.grid, extra)
        vals = self.evaluate(new_grid, "right")
        lls = self.evaluate(new_grid, "left")
        return PiecewiseCdf(new_grid, vals, self.kind, lls, self.lower_tail)

    def on_grid(self, grid: np.ndarray) -> "PiecewiseCdf":
        """Re-express on the union of this grid and another."""
        grid = _as_array(grid)
        new_grid = np.union1d(grid, self.grid)
        vals = self.evaluate(new_grid, "right")
        lls = self.evaluate(new_grid, "left")
        return PiecewiseCdf(new_grid, vals, self.kind, lls, self.lower_tail)

    def to_piecewise_linear(self) -> "PiecewiseCdf":
        """Exact re-encoding of a step function as cadlag piecewise-linear."""
        if self.kind == PIECEWISE_LINEAR:
            return self
        lls = self.left_limit_array()
        return PiecewiseCdf(self.grid, self.values, PIECEWISE_LINEAR, lls, self.lower_tail)

    # -- serialization ----------------------------------------------------------

    def to_json_dict(self) -> dict:
        doc = {
            "kind": self.kind,
            "grid": [float(x) for x in self.grid],
            "values": [float(v) for v in self.values],
            "left_limits": None
            if self.left_limits is None
            else [float(v) for v in self.left_limits],
        }
        if self.lower_tail != 0.0:
            doc["lower_tail"] = float(self.lower_tail)
        return doc

    @staticmethod
    def from_json_dict(doc: dict) -> "PiecewiseCdf":
        allowed = {"kind", "grid", "values", "left_limits", "lower_tail"}
        extra = set(doc) - allowed
        if extra:
            raise CdfError(f"unexpected fields in PiecewiseCdf JSON: {sorted(extra)}")
        for key in ("kind", "grid", "values"):
            if key not in doc:
                raise CdfError(f"missing field {key!r} in PiecewiseCdf JSON")
        return PiecewiseCdf(
            np.asarray(doc["grid"], dtype=float),
            np.asarray(doc["values"], dtype=float),
            doc["kind"],
            None if doc.get("left_limits") is None else np.asarray(doc["left_limits"], dtype=float),
            float(doc.get("lower_tail", 0.0)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict())


# -- constructors ----------------------------------------------------------------


def step_cdf(grid, values, left_limits=None, lower_tail: float = 0.0) -> PiecewiseCdf:
    return PiecewiseCdf(_as_array(grid), _as_array(values), STEP, left_limits, lower_tail)


def linear_cdf(grid, values, left_limits=None, lower_tail: float = 0.0) -> PiecewiseCdf:
    return PiecewiseCdf(
        _as_array(grid), _as_array(values), PIECEWISE_LINEAR, left_limits, lower_tail
    )


def dirac(x: float) -> PiecewiseCdf:
    """Unit mass at ``x``."""
    return step_cdf([x], [1.0])


def uniform_grid_cdf(lo: float = 0.0, hi: float = 1.0, cells: int = 1) -> PiecewiseCdf:
    """Continuous uniform CDF on [lo, hi] as piecewise-linear on ``cells`` cells."""
    grid = np.linspace(lo, hi, cells + 1)
    return linear_cdf(grid, (grid - lo) / (hi - lo))


def step_from_atoms(positions, masses, renormalize: bool = False) -> PiecewiseCdf:
    """Step CDF with the given atoms; positions need not be sorted."""
    pos = _as_array(positions)
    mas = _as_array(masses)
    if np.any(mas < -1e-15):
        raise CdfError("atom masses must be nonnegative")
    order = np.argsort(pos, kind="stable")
    pos, mas = pos[order], mas[order]
    upos, inv = np.unique(pos, return_inverse=True)
    agg = np.zeros(upos.size)
    np.add.at(agg, inv, mas)
    total = agg.sum()
    if renormalize and total > 0:
        agg = agg / total
    return step_cdf(upos, np.cumsum(agg))


# -- pointwise algebra -------------------------------------------------------------


def merged_grid(fs: Sequence[PiecewiseCdf]) -> np.ndarray:
    grids = [f.grid for f in fs]
    out = grids[0]
    for g in grids[1:]:
        out = np.union1d(out, g)
    return out


def mix(components: Sequence[tuple[float, PiecewiseCdf]], weight_tol: float = 1e-12) -> PiecewiseCdf:
    """Pointwise convex combination of CDFs on the merged grid.

    Weights must be nonnegative and sum to one within ``weight_tol``.  The
    result is a step function when all components are steps, otherwise
    piecewise-linear (steps are promoted losslessly).
    """
    if not components:
        raise CdfError("mix requires at least one component")
    weights = np.array([w for w, _ in components], dtype=float)
    if np.any(weights < -1e-15):
        raise CdfError("mixture weights must be nonnegative")
    if abs(weights.sum() - 1.0) > weight_tol:
        raise CdfError(f"mixture weights sum to {weights.sum()!r}, expected 1")
    fs = [f for _, f in components]
    grid = merged_grid(fs)
    vals = np.zeros_like(grid)
    lls = np.zeros_like(grid)
    tails = 0.0
    for w, f in components:
        vals += w * f.evaluate(grid, "right")
        lls += w * f.evaluate(grid, "left")
        tails += w * f.lower_tail
    all_step = all(f.kind == STEP for f in fs)
    kind = STEP if all_step else PIECEWISE_LINEAR
    lls = np.minimum(lls, vals)
    return PiecewiseCdf(grid, vals, kind, None if all_step else lls, tails)


def fosd_leq(a: PiecewiseCdf, b: PiecewiseCdf, tol: float = DEFAULT_TOL) -> bool:
    """Pointwise order ``a(x) <= b(x)`` everywhere (b first-order dominated).

    Checked at every merged breakpoint and left limit; linearity makes the
    breakpoint checks sufficient between nodes.
    """
    grid = np.union1d(a.grid, b.grid)
    if a.lower_tail > b.lower_tail + tol:
        return False
    va = a.evaluate(grid, "right")
    vb = b.evaluate(grid, "right")
    if np.any(va > vb + tol):
        return False
    la = a.evaluate(grid, "left")
    lb = b.evaluate(grid, "left")
    return not np.any(la > lb + tol)


# -- truncations of a prior ----------------------------------------------------------


def _clip_unit(v: np.ndarray) -> np.ndarray:
    return np.clip(v, 0.0, 1.0)


def truncation_bounds(
    f: PiecewiseCdf, tau: float, epsilon: float = 0.0
) -> tuple[PiecewiseCdf, PiecewiseCdf]:
    """Left/right truncations of the prior at level ``tau``.

    Returns ``(f_right, f_left)``: the right truncation (conditional above a
    tau-quantile, the lower envelope) and the left truncation (conditional
    below, the upper envelope).  With ``epsilon > 0`` the perturbed variants
    split at the lower tau-quantile of ``f`` and shrink the interval; when
    ``epsilon >= max(tau, 1 - tau)`` the perturbed interval is empty by
    convention and :class:`EmptyIntervalError` is raised.
    """
    f.require_cdf()
    if not (0.0 < tau < 1.0):
        raise CdfError(f"tau must lie in (0,1), got {tau}")
    if epsilon < 0:
        raise CdfError("epsilon must be nonnegative")
    if epsilon >= max(tau, 1.0 - tau):
        raise EmptyIntervalError(
            f"perturbed interval is empty: epsilon={epsilon} >= max(tau, 1-tau)"
        )
    m = f.quantile(tau, "lower")
    f = f.refine([m])
    grid = f.grid
    vals = f.values
    lls = f.left_limit_array()
    if epsilon == 0.0:
        left_vals = _clip_unit(np.minimum(vals / tau, 1.0))
        left_lls = _clip_unit(np.minimum(lls / tau, 1.0))
        right_vals = _clip_unit(np.maximum((vals - tau) / (1.0 - tau), 0.0))
        right_lls = _clip_unit(np.maximum((lls - tau) / (1.0 - tau), 0.0))
    else:
        at_or_above = grid >= m
        left_vals = np.where(at_or_above, 1.0, vals / (tau + epsilon))
        strictly_above = grid > m
        left_lls = np.where(strictly_above, 1.0, lls / (tau + epsilon))
        denom = 1.0 - (tau - epsilon)
        right_vals = np.where(at_or_above, (vals - (tau - epsilon)) / denom, 0.0)
        right_lls = np.where(strictly_above, (lls - (tau - epsilon)) / denom, 0.0)
        left_vals = _clip_unit(left_vals)
        left_lls = np.minimum(_clip_unit(left_lls), left_vals)
        right_vals = _clip_unit(right_vals)
        right_lls = np.minimum(_clip_unit(right_lls), right_vals)
    f_left = PiecewiseCdf(grid, left_vals, f.kind, left_lls, 0.0)
    f_right = PiecewiseCdf(grid, right_vals, f.kind, right_lls, 0.0)
    return f_right, f_left


# -- rank slicing -----------------------------------------------------------------


def rank_slice(f: PiecewiseCdf, a: float, b: float, snap: float = 1e-11) -> PiecewiseCdf:
    """Conditional of ``f`` on the rank band ``(a, b]`` of its own mass.

    The result is the CDF ``(clip(F, a, b) - a) / (b - a)``: the states of
    ``f`` between cumulative ranks ``a`` and ``b``, renormalized.  Atoms are
    split exactly when a boundary falls inside one.  Boundaries within
    ``snap`` of one of ``f``'s own cumulative values are snapped onto it,
    so float dust cannot smear a sliver of the neighbouring state into the
    slice.
    """
    f.require_cdf()
    if not (0.0 <= a < b <= 1.0 + 1e-12):
        raise CdfError(f"invalid rank band ({a}, {b}]")
    levels = np.union1d(f.values, f.left_limit_array())
    snapped = []
    for level in (a, b):
        k = np.searchsorted(levels, level)
        for cand in (k - 1, k):
            if 0 <= cand < levels.size and abs(levels[cand] - level) <= snap:
                level = float(levels[cand])
                break
        snapped.append(level)
    a, b = snapped
    if b <= a:
        b = a + snap
    extra = []
    for level in (a, b):
        if 0.0 < level < 1.0:
            extra.append(f.quantile(min(max(level, 1e-15), 1 - 1e-15), "lower"))
    f = f.refine(extra)
    span = b - a
    vals = (np.clip(f.values, a, b) - a) / span
    lls = (np.clip(f.left_limit_array(), a, b) - a) / span
    keep = np.ones(f.grid.size, dtype=bool)
    # Drop leading nodes that stay at 0 and trailing nodes pinned after 1,
    # keeping one node on each side for exact boundaries.
    zero = vals <= 0.0
    if zero.any():
        last_zero = np.max(np.nonzero(zero)[0])
        keep[: last_zero] = False
    one = lls >= 1.0
    if one.any():
        first_one = np.min(np.nonzero(one)[0])
        keep[first_one + 1 :] = False
    grid = f.grid[keep]
    vals = vals[keep]
    lls = np.minimum(lls[keep], vals)
    return PiecewiseCdf(grid, vals, f.kind, lls, 0.0)
