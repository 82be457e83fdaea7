"""Monotone function intervals and their extreme points.

An interval ``I(lower, upper)`` collects every nondecreasing right-continuous
function pinched pointwise between two monotone bounds.  A member is an
extreme point exactly when, off a countable family of flat pieces, it
coincides with one of the bounds, and every flat piece touches the upper
bound at its left end or the lower bound at its right limit.  On a finite
grid the flats are maximal runs of equal values and the test is mechanical.

The module provides the membership test, the structured extreme-point
verdict, a seeded sampler whose outputs are extreme by construction, and an
exact finite Caratheodory decomposition of any member into extreme points of
the grid polytope.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cdf_core import (
    DEFAULT_TOL,
    PIECEWISE_LINEAR,
    STEP,
    CdfError,
    PiecewiseCdf,
    fosd_leq,
)

__all__ = [
    "TOUCH_UPPER_AT_LEFT",
    "TOUCH_LOWER_AT_RIGHT_LIMIT",
    "TOUCH_BOTH",
    "TOUCH_NONE",
    "V_STRICTLY_INTERIOR_NOT_FLAT",
    "V_FLAT_TOUCHES_NEITHER_BOUND",
    "ContainmentError",
    "ResolutionTooCoarseError",
    "FlatSegment",
    "Violation",
    "ExtremeVerdict",
    "MonotoneInterval",
    "contains",
    "is_extreme_point",
    "sample_extreme_point",
    "decompose_as_mixture",
]

TOUCH_UPPER_AT_LEFT = "upper_at_left"
TOUCH_LOWER_AT_RIGHT_LIMIT = "lower_at_right_limit"
TOUCH_BOTH = "both"
TOUCH_NONE = "none"

V_STRICTLY_INTERIOR_NOT_FLAT = "strictly_interior_not_flat"
V_FLAT_TOUCHES_NEITHER_BOUND = "flat_touches_neither_bound"


class ContainmentError(CdfError):
    """The function does not lie inside the interval."""


class ResolutionTooCoarseError(CdfError):
    """No decomposition within tolerance exists at this grid resolution."""


@dataclass(frozen=True)
class FlatSegment:
    start: float
    end: float
    level: float
    touch: str

    def to_json_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "level": self.level,
            "touch": self.touch,
        }


@dataclass(frozen=True)
class Violation:
    x: float
    reason: str

    def to_json_dict(self) -> dict:
        return {"x": self.x, "reason": self.reason}


@dataclass(frozen=True)
class ExtremeVerdict:
    is_extreme: bool
    flat_segments: tuple[FlatSegment, ...]
    violations: tuple[Violation, ...]

    def to_json_dict(self) -> dict:
        return {
            "is_extreme": self.is_extreme,
            "flat_segments": [s.to_json_dict() for s in self.flat_segments],
            "violations": [v.to_json_dict() for v in self.violations],
        }


@dataclass(frozen=True)
class MonotoneInterval:
    """Pair of monotone bounds; ``None`` encodes an unbounded side."""

    lower: PiecewiseCdf | None
    upper: PiecewiseCdf | None

    def __post_init__(self) -> None:
        if self.lower is None and self.upper is None:
            raise CdfError("at least one bound must be finite")
        if self.lower is not None and self.upper is not None:
            if not fosd_leq(self.lower, self.upper):
                raise CdfError("interval bounds are not ordered: lower > upper somewhere")

    @property
    def bounded(self) -> bool:
        return self.lower is not None and self.upper is not None

    def grid(self) -> np.ndarray:
        grids = [b.grid for b in (self.lower, self.upper) if b is not None]
        out = grids[0]
        for g in grids[1:]:
            out = np.union1d(out, g)
        return out

    def node_bounds(self, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Right-value bounds at the given nodes, with infinities for open sides."""
        lo = (
            np.full(grid.size, -np.inf)
            if self.lower is None
            else np.asarray(self.lower.evaluate(grid, "right"), dtype=float)
        )
        hi = (
            np.full(grid.size, np.inf)
            if self.upper is None
            else np.asarray(self.upper.evaluate(grid, "right"), dtype=float)
        )
        return lo, hi

    def step_member_bounds(self, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Node bounds for step functions living inside the interval.

        A step member is constant on ``[x_i, x_{i+1})``, so it must clear the
        lower bound's left limit at the next node, not just its value at
        ``x_i``.  For step bounds this coincides with :meth:`node_bounds`.
        """
        lo, hi = self.node_bounds(grid)
        if self.lower is not None:
            lo_left = np.asarray(self.lower.evaluate(grid, "left"), dtype=float)
            lo = lo.copy()
            lo[:-1] = np.maximum(lo[:-1], lo_left[1:])
        return lo, hi

    def to_json_dict(self) -> dict:
        return {
            "lower": None if self.lower is None else self.lower.to_json_dict(),
            "upper": None if self.upper is None else self.upper.to_json_dict(),
        }

    @staticmethod
    def from_json_dict(doc: dict) -> "MonotoneInterval":
        extra = set(doc) - {"lower", "upper"}
        if extra:
            raise CdfError(f"unexpected fields in MonotoneInterval JSON: {sorted(extra)}")
        load = lambda d: None if d is None else PiecewiseCdf.from_json_dict(d)
        return MonotoneInterval(load(doc.get("lower")), load(doc.get("upper")))


def contains(interval: MonotoneInterval, h: PiecewiseCdf, tol: float = DEFAULT_TOL) -> bool:
    """Pointwise membership ``lower <= h <= upper`` including left limits."""
    if interval.lower is not None and not fosd_leq(interval.lower, h, tol):
        return False
    if interval.upper is not None and not fosd_leq(h, interval.upper, tol):
        return False
    return True


def _merged_nodes(interval: MonotoneInterval, h: PiecewiseCdf) -> np.ndarray:
    return np.union1d(interval.grid(), h.grid)


def _bound_eval(bound: PiecewiseCdf | None, grid, side, fill):
    if bound is None:
        return np.full(len(grid), fill)
    return np.asarray(bound.evaluate(grid, side), dtype=float)


def is_extreme_point(
    interval: MonotoneInterval, h: PiecewiseCdf, tol: float = DEFAULT_TOL
) -> ExtremeVerdict:
    """Structured extreme-point test on the merged grid.

    Flat pieces are maximal runs of equal values (level tolerance ``tol``);
    each must touch the upper bound at its left end or the lower bound at
    its right limit, and everything off the flats must coincide with a
    bound.  Rejects ``h`` outside the interval.
    """
    if not contains(interval, h, max(tol, DEFAULT_TOL)):
        raise ContainmentError("function lies outside the interval")
    grid = _merged_nodes(interval, h)
    n = grid.size
    hv = np.asarray(h.evaluate(grid, "right"), dtype=float)
    hl = np.asarray(h.evaluate(grid, "left"), dtype=float)
    lo_v = _bound_eval(interval.lower, grid, "right", -np.inf)
    lo_l = _bound_eval(interval.lower, grid, "left", -np.inf)
    hi_v = _bound_eval(interval.upper, grid, "right", np.inf)
    hi_l = _bound_eval(interval.upper, grid, "left", np.inf)
    pl = h.kind == PIECEWISE_LINEAR

    # Maximal runs of equal node values; a piecewise-linear rise inside a
    # cell breaks the run even when the endpoint values agree (cannot occur
    # for monotone data, but jumps at nodes can).
    runs: list[tuple[int, int]] = []
    start = 0
    for i in range(1, n):
        if abs(hv[i] - hv[start]) > tol:
            runs.append((start, i - 1))
            start = i
    runs.append((start, n - 1))

    segments: list[FlatSegment] = []
    violations: list[Violation] = []

    for (i, j) in runs:
        c = hv[i]
        # Genuine flat pieces: for steps every run spans a positive-length
        # interval; for piecewise-linear only multi-node runs and the final
        # run (which extends to +inf) do.
        genuine_flat = (not pl) or (j > i) or (j == n - 1)
        touch_upper = abs(c - hi_v[i]) <= tol
        if not genuine_flat:
            interior = (c > lo_v[i] + tol) and (c < hi_v[i] - tol)
            if interior:
                violations.append(Violation(float(grid[i]), V_STRICTLY_INTERIOR_NOT_FLAT))
            continue
        # Right limit of the flat: steps persist to the next node, linear
        # runs end at their last node (rising immediately after).
        if j == n - 1:
            right_lower = lo_v[-1] if interval.lower is not None else -np.inf
            end_x = float(grid[-1])
            touch_lower = abs(c - right_lower) <= tol
        elif not pl:
            end_x = float(grid[j + 1])
            touch_lower = abs(c - lo_l[j + 1]) <= tol
        else:
            end_x = float(grid[j])
            touch_lower = abs(c - lo_l[j]) <= tol or abs(c - lo_v[j]) <= tol
        if touch_upper and touch_lower:
            touch = TOUCH_BOTH
        elif touch_upper:
            touch = TOUCH_UPPER_AT_LEFT
        elif touch_lower:
            touch = TOUCH_LOWER_AT_RIGHT_LIMIT
        else:
            touch = TOUCH_NONE
        segments.append(FlatSegment(float(grid[i]), end_x, float(c), touch))
        if touch == TOUCH_NONE:
            violations.append(Violation(float(grid[i]), V_FLAT_TOUCHES_NEITHER_BOUND))

    if pl:
        # Rising cells must ride one of the bounds along the whole cell.
        for i in range(n - 1):
            rise = hl[i + 1] - hv[i]
            if rise <= tol:
                continue
            on_upper = abs(hv[i] - hi_v[i]) <= tol and abs(hl[i + 1] - hi_l[i + 1]) <= tol
            on_lower = abs(hv[i] - lo_v[i]) <= tol and abs(hl[i + 1] - lo_l[i + 1]) <= tol
            if not (on_upper or on_lower):
                violations.append(
                    Violation(float(0.5 * (grid[i] + grid[i + 1])), V_STRICTLY_INTERIOR_NOT_FLAT)
                )

    return ExtremeVerdict(len(violations) == 0, tuple(segments), tuple(violations))


# -- vertex sampling --------------------------------------------------------------


def _vertex_by_objective(
    lo: np.ndarray,
    hi: np.ndarray,
    c: np.ndarray,
    pinned: np.ndarray | None = None,
) -> np.ndarray:
    """Maximize ``c . v`` over the monotone box polytope by level DP.

    ``pinned`` holds per-node fixed values (NaN where free).  Candidate
    levels are the bound values plus any pinned values; the optimum of a
    generic objective is a vertex.
    """
    n = lo.size
    levels = np.unique(np.concatenate([lo, hi, [] if pinned is None else pinned[~np.isnan(pinned)]]))
    levels = levels[np.isfinite(levels)]
    if levels.size == 0:
        raise CdfError("cannot sample a vertex of an unbounded interval")
    L = levels.size
    neg = -np.inf
    score = np.full(L, 0.0)
    back = np.zeros((n, L), dtype=np.int64)
    for i in range(n):
        feas = (levels >= lo[i] - 1e-12) & (levels <= hi[i] + 1e-12)
        if pinned is not None and not np.isnan(pinned[i]):
            feas &= np.abs(levels - pinned[i]) <= 1e-12
        gain = np.where(feas, c[i] * levels, neg)
        if i == 0:
            score = gain
            back[0] = np.arange(L)
        else:
            # best over levels <= current level
            run_best = np.maximum.accumulate(score)
            run_arg = np.zeros(L, dtype=np.int64)
            best = neg
            bi = 0
            for k in range(L):
                if score[k] > best:
                    best = score[k]
                    bi = k
                run_arg[k] = bi
            score = np.where(np.isfinite(gain), gain + run_best, neg)
            back[i] = run_arg
        if not np.any(np.isfinite(score)):
            raise CdfError("empty feasible set while sampling a vertex")
    k = int(np.argmax(score))
    out = np.empty(n)
    for i in range(n - 1, -1, -1):
        out[i] = levels[k]
        k = int(back[i][k])
    return out


def _step_member(grid: np.ndarray, values: np.ndarray) -> PiecewiseCdf:
    # Vertices are emitted as cadlag step functions; only those are extreme
    # points of the continuum interval at grid resolution.
    return PiecewiseCdf(grid, np.maximum.accumulate(values), STEP)


def sample_extreme_point(
    interval: MonotoneInterval, seed: int, tol: float = DEFAULT_TOL
) -> PiecewiseCdf:
    """Deterministic, seedable extreme point of the grid interval.

    Maximizes a seeded random linear objective over the node polytope; the
    optimum of a generic objective is a vertex, which the structured test
    certifies before returning.
    """
    if not interval.bounded:
        raise CdfError("sampling requires both bounds finite")
    grid = interval.grid()
    lo, hi = interval.step_member_bounds(grid)
    if np.any(lo > hi + 1e-12):
        raise CdfError("interval admits no step member at this grid resolution")
    rng = np.random.default_rng(seed)
    for attempt in range(6):
        c = rng.standard_normal(grid.size)
        v = _vertex_by_objective(np.minimum(lo, hi), hi, c)
        cand = _step_member(grid, v)
        if is_extreme_point(interval, cand, tol).is_extreme:
            return cand
    raise CdfError("failed to sample an extreme point (degenerate bounds?)")


# -- finite Caratheodory decomposition ----------------------------------------------


def _face_vertex(lo, hi, t, rng, snap_tol):
    """A vertex of the smallest face containing ``t``."""
    pinned = np.full(t.size, np.nan)
    pinned[np.abs(t - lo) <= snap_tol] = lo[np.abs(t - lo) <= snap_tol]
    pinned[np.abs(t - hi) <= snap_tol] = hi[np.abs(t - hi) <= snap_tol]
    # merge tied neighbours into blocks so the DP cannot split them
    blocks = [0]
    for i in range(1, t.size):
        if abs(t[i] - t[i - 1]) <= snap_tol:
            blocks.append(blocks[-1])
        else:
            blocks.append(blocks[-1] + 1)
    blocks = np.asarray(blocks)
    nb = blocks[-1] + 1
    blo = np.full(nb, -np.inf)
    bhi = np.full(nb, np.inf)
    bc = np.zeros(nb)
    bpin = np.full(nb, np.nan)
    c = rng.standard_normal(t.size)
    for i in range(t.size):
        b = blocks[i]
        blo[b] = max(blo[b], lo[i])
        bhi[b] = min(bhi[b], hi[i])
        bc[b] += c[i]
        if not np.isnan(pinned[i]):
            bpin[b] = t[i]
    bv = _vertex_by_objective(blo, bhi, bc, bpin)
    return bv[blocks]


def decompose_as_mixture(
    interval: MonotoneInterval,
    h: PiecewiseCdf,
    max_components: int = 0,
    tol: float = DEFAULT_TOL,
) -> list[tuple[float, PiecewiseCdf]]:
    """Express ``h`` as a finite convex combination of extreme points.

    Walks a deterministic Caratheodory ray-shoot: pick a vertex of the
    smallest face containing the residual, step through the residual to the
    far boundary, and recurse on the boundary point.  The active set grows
    every round, so at most ``3 * nodes`` components emerge; the mixture is
    exact to float precision.  ``max_components`` of 0 means no cap.
    """
    if not interval.bounded:
        raise CdfError("decomposition requires both bounds finite")
    if not contains(interval, h, max(tol, DEFAULT_TOL)):
        raise ContainmentError("function lies outside the interval")
    grid = np.union1d(interval.grid(), h.grid)
    lo, hi = interval.step_member_bounds(grid)
    t = np.asarray(h.evaluate(grid, "right"), dtype=float)
    slack = max(np.max(lo - t, initial=0.0), np.max(t - hi, initial=0.0))
    if slack > max(tol, DEFAULT_TOL):
        # A continuous target can sit inside the interval while no cadlag
        # step member matches its node values (the lower bound overtakes the
        # constant piece inside a cell).  Finer grids shrink the gap.
        raise ResolutionTooCoarseError(
            f"target misses the step-member polytope by {slack:.3g} at this grid"
        )
    t = np.maximum.accumulate(np.clip(t, lo, hi))
    rng = np.random.default_rng(20240412)
    snap = 1e-11
    parts: list[tuple[float, PiecewiseCdf]] = []
    w_rem = 1.0
    limit = 3 * grid.size + 4
    for _ in range(limit):
        e = None
        for _attempt in range(4):
            cand = _face_vertex(lo, hi, t, rng, snap)
            member = _step_member(grid, cand)
            if is_extreme_point(interval, member, max(tol, DEFAULT_TOL)).is_extreme:
                e = cand
                break
        if e is None:
            raise ResolutionTooCoarseError("could not certify a face vertex")
        d = t - e
        if np.max(np.abs(d)) <= 1e-12:
            parts.append((w_rem, _step_member(grid, e)))
            break
        s = np.inf
        for i in range(grid.size):
            if d[i] > 1e-15:
                s = min(s, (hi[i] - e[i]) / d[i])
            elif d[i] < -1e-15:
                s = min(s, (e[i] - lo[i]) / (-d[i]))
        for i in range(grid.size - 1):
            dd = d[i + 1] - d[i]
            if dd < -1e-15:
                s = min(s, (e[i + 1] - e[i]) / (-dd))
        if not np.isfinite(s):
            raise ResolutionTooCoarseError("unbounded ray during decomposition")
        s = max(s, 1.0)
        b = e + s * d
        b = np.minimum(np.maximum(b, lo), hi)
        b = np.maximum.accumulate(b)
        lam = 1.0 - 1.0 / s
        if lam > 1e-14:
            parts.append((w_rem * lam, _step_member(grid, e)))
        w_rem = w_rem / s
        # snap near-active coordinates so the active set provably grows
        b[np.abs(b - lo) <= snap] = lo[np.abs(b - lo) <= snap]
        b[np.abs(b - hi) <= snap] = hi[np.abs(b - hi) <= snap]
        for i in range(1, grid.size):
            if abs(b[i] - b[i - 1]) <= snap:
                b[i] = b[i - 1]
        t = b
    else:
        raise ResolutionTooCoarseError("decomposition did not converge")
    if max_components and len(parts) > max_components:
        raise ResolutionTooCoarseError(
            f"needed {len(parts)} components, cap was {max_components}"
        )
    total = sum(w for w, _ in parts)
    parts = [(w / total, f) for w, f in parts]
    return parts
