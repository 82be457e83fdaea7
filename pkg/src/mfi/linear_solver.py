"""Dense LP over grid-discretized monotone functions.

The decision variables encode a monotone function pinched inside an
interval.  Two encodings are supported:

* ``node``: one variable per breakpoint (the function's value there).
  Members are read as step functions between nodes; this is the natural
  encoding when every functional in the problem pairs only with node
  values (atomic distributions).
* ``cadlag``: two variables per breakpoint, the left limit and the value,
  interleaved into a single monotone chain ``l_0 <= v_0 <= l_1 <= ...``.
  Members are cadlag piecewise-linear functions, so optima may place
  genuine jumps: this matters whenever the objective integrates a payoff
  against the function's increments and the best increment is an atom.

Monotonicity is a chain of difference inequalities, the interval bounds
are per-variable boxes, and finitely many extra linear functionals enter
as equalities or ``a . v >= b`` inequalities.  A from-scratch two-phase
dense simplex with Bland's rule does the solving; an exhaustive pruned
enumeration of anchored-run candidates doubles as the brute-force vertex
oracle on small grids.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .cdf_core import PIECEWISE_LINEAR, STEP, CdfError, PiecewiseCdf
from .interval_core import ExtremeVerdict, MonotoneInterval, is_extreme_point

__all__ = [
    "LpError",
    "LpInfeasibleError",
    "LpUnboundedError",
    "BudgetExceededError",
    "MonotoneLp",
    "LpSolution",
    "solve",
    "enumerate_vertices",
    "stieltjes_objective",
    "cadlag_stieltjes_objective",
    "level_objective",
    "expect_payoff",
]

_PIVOT_TOL = 1e-9
_COST_TOL = 1e-10


class LpError(CdfError):
    """Generic linear-programming failure."""


class LpInfeasibleError(LpError):
    """The feasible region is empty."""


class LpUnboundedError(LpError):
    """Objective unbounded; cannot occur with box bounds (internal error)."""


class BudgetExceededError(LpError):
    """Vertex enumeration hit the requested budget before exhaustion."""


# -- simplex core ------------------------------------------------------------------


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    colvals = T[:, col].copy()
    colvals[row] = 0.0
    T -= np.outer(colvals, T[row])
    basis[row] = col


def _run_simplex(T: np.ndarray, basis: np.ndarray, cost: np.ndarray, ncols: int) -> None:
    """Minimize with Bland's rule; mutates tableau, basis and cost row."""
    m = T.shape[0]
    while True:
        enter = -1
        for j in range(ncols):
            if cost[j] < -_COST_TOL:
                enter = j
                break
        if enter < 0:
            return
        leave = -1
        best = np.inf
        for i in range(m):
            a = T[i, enter]
            if a > _PIVOT_TOL:
                ratio = T[i, -1] / a
                if ratio < best - 1e-12 or (
                    ratio <= best + 1e-12 and (leave < 0 or basis[i] < basis[leave])
                ):
                    if ratio < best:
                        best = ratio
                    leave = i
        if leave < 0:
            raise LpUnboundedError("unbounded direction in simplex")
        _pivot(T, basis, leave, enter)
        cost -= cost[enter] * T[leave]


def simplex_solve(c, a_ub, b_ub, a_eq, b_eq):
    """Minimize ``c . x`` s.t. ``a_ub x <= b_ub``, ``a_eq x = b_eq``, ``x >= 0``."""
    c = np.asarray(c, dtype=float)
    n = c.size
    a_ub = np.asarray(a_ub, dtype=float).reshape(-1, n) if len(a_ub) else np.zeros((0, n))
    a_eq = np.asarray(a_eq, dtype=float).reshape(-1, n) if len(a_eq) else np.zeros((0, n))
    b_ub = np.asarray(b_ub, dtype=float).ravel()
    b_eq = np.asarray(b_eq, dtype=float).ravel()
    m_ub, m_eq = a_ub.shape[0], a_eq.shape[0]
    m = m_ub + m_eq
    nslack = m_ub
    ncols = n + nslack
    A = np.zeros((m, ncols))
    b = np.concatenate([b_ub, b_eq])
    A[:m_ub, :n] = a_ub
    A[:m_ub, n:ncols] = np.eye(m_ub)
    A[m_ub:, :n] = a_eq
    neg = b < 0
    A[neg] *= -1.0
    b = np.abs(b)

    T = np.zeros((m, ncols + m + 1))
    T[:, :ncols] = A
    T[:, ncols : ncols + m] = np.eye(m)
    T[:, -1] = b
    basis = np.arange(ncols, ncols + m)
    cost1 = np.zeros(ncols + m + 1)
    cost1[ncols : ncols + m] = 1.0
    for i in range(m):
        cost1 -= T[i]
    _run_simplex(T, basis, cost1, ncols)
    if -cost1[-1] > 1e-8:
        raise LpInfeasibleError("phase-1 optimum positive: empty feasible region")
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= ncols:
            piv = -1
            for j in range(ncols):
                if abs(T[i, j]) > _PIVOT_TOL:
                    piv = j
                    break
            if piv >= 0:
                _pivot(T, basis, i, piv)
            else:
                keep[i] = False
    T = np.ascontiguousarray(T[keep][:, list(range(ncols)) + [-1]])
    basis = basis[keep]
    cost2 = np.zeros(ncols + 1)
    cost2[:n] = c
    for i, bi in enumerate(basis):
        if cost2[bi] != 0.0:
            cost2 -= cost2[bi] * T[i]
    _run_simplex(T, basis, cost2, ncols)
    x = np.zeros(ncols)
    for i, bi in enumerate(basis):
        x[bi] = T[i, -1]
    return x[:n], basis


def _chain_solve(lo, hi, c, eqs, ineqs, sense):
    """Optimize ``c . w`` over the monotone chain ``lo <= w <= hi`` nondecreasing."""
    n = lo.size
    if np.any(lo > hi + 1e-12):
        raise LpInfeasibleError("box bounds cross")
    ub = hi - lo
    rows_ub, rhs_ub = [], []
    eye = np.eye(n)
    for i in range(n):
        rows_ub.append(eye[i])
        rhs_ub.append(ub[i])
    for i in range(n - 1):
        row = np.zeros(n)
        row[i] = 1.0
        row[i + 1] = -1.0
        rows_ub.append(row)
        rhs_ub.append(lo[i + 1] - lo[i])
    for a, rhs in ineqs:
        rows_ub.append(-a)
        rhs_ub.append(float(a @ lo) - rhs)
    rows_eq = [a for a, _ in eqs]
    rhs_eq = [rhs - float(a @ lo) for a, rhs in eqs]
    cc = np.asarray(c, dtype=float)
    if sense == "max":
        cc = -cc
    x, _ = simplex_solve(cc, rows_ub, rhs_ub, rows_eq, rhs_eq)
    w = lo + np.clip(x, 0.0, ub)
    return np.minimum(np.maximum.accumulate(w), hi)


def _chain_vertices(lo, hi, eqs, ineqs, max_count):
    """All basic feasible solutions of the chain polytope, by pruned DFS.

    Every vertex splits the chain into maximal constant runs whose level
    either touches the upper box at the run's first slot, the lower box at
    its last slot, or floats, pinned by a subset of the extra constraints
    that hold with equality.
    """
    n = lo.size
    extras = [(a, r, False) for a, r in eqs] + [(a, r, True) for a, r in ineqs]
    n_extra = len(extras)
    seen: dict[tuple, np.ndarray] = {}

    def feasible(v: np.ndarray) -> bool:
        if np.any(v < lo - 1e-9) or np.any(v > hi + 1e-9):
            return False
        if np.any(np.diff(v) < -1e-9):
            return False
        for a, rhs, slack_ok in extras:
            val = float(a @ v)
            if slack_ok:
                if val < rhs - 1e-8:
                    return False
            elif abs(val - rhs) > 1e-8:
                return False
        return True

    def emit(v: np.ndarray) -> None:
        key = tuple(np.round(v / 1e-9).astype(np.int64))
        if key not in seen:
            if len(seen) >= max_count:
                raise BudgetExceededError(f"more than {max_count} vertices")
            seen[key] = v.copy()

    def close_out(blocks) -> None:
        float_blocks = [b for b, (_, _, val) in enumerate(blocks) if val is None]
        nfloat = len(float_blocks)
        base_vals = np.array([np.nan if v is None else v for (_, _, v) in blocks])
        for tight_set in itertools.combinations(range(n_extra), nfloat):
            vals = base_vals.copy()
            if nfloat:
                mat = np.zeros((nfloat, nfloat))
                rhs_v = np.zeros(nfloat)
                for row, k in enumerate(tight_set):
                    a, rhs, _ = extras[k]
                    sums = np.array([a[i : j + 1].sum() for (i, j, _) in blocks])
                    rhs_v[row] = rhs - sum(
                        vals[b] * sums[b] for b in range(len(blocks)) if not np.isnan(vals[b])
                    )
                    for col, b in enumerate(float_blocks):
                        mat[row, col] = sums[b]
                try:
                    sol = np.linalg.solve(mat, rhs_v)
                except np.linalg.LinAlgError:
                    continue
                if not np.all(np.isfinite(sol)):
                    continue
                for col, b in enumerate(float_blocks):
                    vals[b] = sol[col]
            v = np.empty(n)
            for b, (i, j, _) in enumerate(blocks):
                v[i : j + 1] = vals[b]
            if feasible(v):
                emit(v)
            if not nfloat:
                break

    def dfs(start: int, prev_val: float, floats_used: int, blocks: list) -> None:
        for end in range(start, n):
            cands: list[float | None] = []
            for val in (hi[start], lo[end]):
                if val >= prev_val - 1e-9 and lo[end] - 1e-9 <= val <= hi[start] + 1e-9:
                    if not any(val == c for c in cands):
                        cands.append(val)
            if floats_used < n_extra and lo[end] <= hi[start] + 1e-9:
                cands.append(None)
            for val in cands:
                blocks.append((start, end, val))
                nxt_prev = prev_val if val is None else val
                used = floats_used + (1 if val is None else 0)
                if end == n - 1:
                    close_out(blocks)
                else:
                    dfs(end + 1, nxt_prev, used, blocks)
                blocks.pop()

    dfs(0, -np.inf, 0, [])
    return list(seen.values())


# -- monotone-interval LP ------------------------------------------------------------

NODE = "node"
CADLAG = "cadlag"


@dataclass(frozen=True)
class MonotoneLp:
    """Linear program over an interval of monotone functions.

    ``objective`` pairs with the node values ``H(x_i)``;
    ``objective_left`` (cadlag encoding only) pairs with the left limits
    ``H(x_i-)``.  Constraints pair with node values and read
    ``a . v = rhs`` or ``a . v >= rhs``.
    """

    interval: MonotoneInterval
    objective: np.ndarray
    sense: str = "max"
    eq_constraints: tuple[tuple[np.ndarray, float], ...] = ()
    ineq_constraints: tuple[tuple[np.ndarray, float], ...] = ()
    objective_left: np.ndarray | None = None
    objective_offset: float = 0.0
    encoding: str = NODE

    def __post_init__(self) -> None:
        if self.sense not in ("max", "min"):
            raise LpError(f"sense must be 'max' or 'min', got {self.sense!r}")
        if self.encoding not in (NODE, CADLAG):
            raise LpError(f"unknown encoding {self.encoding!r}")
        grid = self.interval.grid()
        obj = np.asarray(self.objective, dtype=float)
        object.__setattr__(self, "objective", obj)
        if obj.size != grid.size:
            raise LpError("objective length must match the interval grid")
        if self.objective_left is not None:
            ol = np.asarray(self.objective_left, dtype=float)
            if ol.size != grid.size:
                raise LpError("objective_left length must match the interval grid")
            object.__setattr__(self, "objective_left", ol)
        eqs = tuple((np.asarray(a, dtype=float), float(r)) for a, r in self.eq_constraints)
        ineqs = tuple((np.asarray(a, dtype=float), float(r)) for a, r in self.ineq_constraints)
        for a, _ in eqs + ineqs:
            if a.size != grid.size:
                raise LpError("constraint length must match the interval grid")
        object.__setattr__(self, "eq_constraints", eqs)
        object.__setattr__(self, "ineq_constraints", ineqs)

    @property
    def grid(self) -> np.ndarray:
        return self.interval.grid()


@dataclass(frozen=True)
class LpSolution:
    h: PiecewiseCdf
    value: float
    active_constraints: tuple[int, ...]
    structure: ExtremeVerdict
    gap_bound: float = 0.0


def _layout(lp: MonotoneLp):
    """Boxes and coefficient interleaving for the chosen encoding."""
    grid = lp.interval.grid()
    n = grid.size
    interval = lp.interval
    lo_v, hi_v = interval.node_bounds(grid)
    if not (np.all(np.isfinite(lo_v)) and np.all(np.isfinite(hi_v))):
        raise LpError("optimization requires both bounds finite")
    if lp.encoding == NODE:
        def inter(value_vec, left_vec=None):
            return np.asarray(value_vec, dtype=float)

        def decode(w):
            return PiecewiseCdf(grid, np.maximum.accumulate(w), _member_kind(interval))

        return lo_v, hi_v, inter, decode
    lo_l = (
        np.zeros(n)
        if interval.lower is None
        else np.asarray(interval.lower.evaluate(grid, "left"), dtype=float)
    )
    hi_l = (
        np.full(n, np.inf)
        if interval.upper is None
        else np.asarray(interval.upper.evaluate(grid, "left"), dtype=float)
    )
    lo2 = np.empty(2 * n)
    hi2 = np.empty(2 * n)
    lo2[0::2], lo2[1::2] = lo_l, lo_v
    hi2[0::2], hi2[1::2] = hi_l, hi_v

    def inter(value_vec, left_vec=None):
        out = np.zeros(2 * n)
        out[1::2] = np.asarray(value_vec, dtype=float)
        if left_vec is not None:
            out[0::2] = np.asarray(left_vec, dtype=float)
        return out

    def decode(w):
        w = np.maximum.accumulate(w)
        values = w[1::2]
        lls = np.minimum(w[0::2], values)
        return PiecewiseCdf(grid, values, PIECEWISE_LINEAR, lls)

    return lo2, hi2, inter, decode


def _member_kind(interval: MonotoneInterval) -> str:
    kinds = {b.kind for b in (interval.lower, interval.upper) if b is not None}
    return STEP if kinds == {STEP} else PIECEWISE_LINEAR


def _package(lp: MonotoneLp, h: PiecewiseCdf) -> LpSolution:
    grid = lp.interval.grid()
    v = np.asarray(h.evaluate(grid, "right"), dtype=float)
    lft = np.asarray(h.evaluate(grid, "left"), dtype=float)
    value = float(lp.objective @ v + lp.objective_offset)
    if lp.objective_left is not None:
        value += float(lp.objective_left @ lft)
    active = list(range(len(lp.eq_constraints)))
    base = len(lp.eq_constraints)
    for k, (a, rhs) in enumerate(lp.ineq_constraints):
        if abs(float(a @ v) - rhs) <= 1e-8:
            active.append(base + k)
    structure = is_extreme_point(lp.interval, h, 1e-6)
    return LpSolution(h, value, tuple(active), structure, gap_bound=1e-10 * grid.size)


def solve(lp: MonotoneLp) -> LpSolution:
    """Optimal basic feasible solution of the monotone LP.

    Box bounds rule out unboundedness; an :class:`LpUnboundedError` is an
    internal failure.  Constraint residuals of the returned vertex are
    verified to ``1e-8``.
    """
    lo, hi, inter, decode = _layout(lp)
    c = inter(lp.objective, lp.objective_left)
    eqs = [(inter(a), r) for a, r in lp.eq_constraints]
    ineqs = [(inter(a), r) for a, r in lp.ineq_constraints]
    w = _chain_solve(lo, hi, c, eqs, ineqs, lp.sense)
    h = decode(w)
    sol = _package(lp, h)
    _check_residuals(lp, sol.h)
    return sol


def _check_residuals(lp: MonotoneLp, h: PiecewiseCdf, tol: float = 1e-8) -> None:
    grid = lp.interval.grid()
    v = np.asarray(h.evaluate(grid, "right"), dtype=float)
    for a, rhs in lp.eq_constraints:
        if abs(float(a @ v) - rhs) > tol:
            raise LpError(f"equality residual {abs(float(a @ v) - rhs):.2e} exceeds {tol}")
    for a, rhs in lp.ineq_constraints:
        if float(a @ v) < rhs - tol:
            raise LpError(f"inequality violated by {rhs - float(a @ v):.2e}")


def enumerate_vertices(lp: MonotoneLp, max_count: int = 200000) -> list[LpSolution]:
    """Every basic feasible solution of the discretized polytope.

    A brute-force oracle for small grids; deduplicates within 1e-9 and
    raises :class:`BudgetExceededError` once ``max_count`` distinct
    vertices appear.  Results are sorted best-first by the objective.
    """
    grid = lp.interval.grid()
    if grid.size > 24:
        raise LpError("vertex enumeration is a small-grid oracle (<= 24 nodes)")
    if len(lp.eq_constraints) + len(lp.ineq_constraints) > 3:
        raise LpError("vertex oracle supports at most 3 extra constraints")
    lo, hi, inter, decode = _layout(lp)
    eqs = [(inter(a), r) for a, r in lp.eq_constraints]
    ineqs = [(inter(a), r) for a, r in lp.ineq_constraints]
    ws = _chain_vertices(lo, hi, eqs, ineqs, max_count)
    out = [_package(lp, decode(w)) for w in ws]
    out.sort(key=lambda s: -s.value if lp.sense == "max" else s.value)
    return out


# -- objective builders ----------------------------------------------------------------


def _tabulate(grid: np.ndarray, payoff) -> np.ndarray:
    if callable(payoff):
        return np.array([float(payoff(x)) for x in grid])
    v = np.asarray(payoff, dtype=float)
    if v.size != grid.size:
        raise LpError("payoff table must match the grid")
    return v


def _simpson_cells(grid: np.ndarray, payoff, v: np.ndarray) -> np.ndarray:
    if callable(payoff):
        mids = np.array(
            [float(payoff(0.5 * (grid[i] + grid[i + 1]))) for i in range(grid.size - 1)]
        )
    else:
        mids = 0.5 * (v[:-1] + v[1:])
    return (v[:-1] + 4.0 * mids + v[1:]) / 6.0


def stieltjes_objective(grid: np.ndarray, payoff) -> np.ndarray:
    """Node coefficients of ``int payoff dH`` for step members.

    All mass sits at the nodes, so a point mass contributes the payoff
    exactly at its location: the coefficient on ``H(x_i)`` is
    ``payoff(x_i) - payoff(x_{i+1})`` plus the terminal payoff.
    """
    grid = np.asarray(grid, dtype=float)
    v = _tabulate(grid, payoff)
    c = np.empty(grid.size)
    c[:-1] = v[:-1] - v[1:]
    c[-1] = v[-1]
    return c


def cadlag_stieltjes_objective(grid: np.ndarray, payoff):
    """Value and left-limit coefficients of ``int payoff dH`` for cadlag members.

    Node atoms ``H(x_i) - H(x_i-)`` pay off at the node; cell mass
    ``H(x_{i+1}-) - H(x_i)`` is integrated by Simpson's rule, exact for
    payoffs up to cubic when ``payoff`` is callable.
    """
    grid = np.asarray(grid, dtype=float)
    n = grid.size
    v = _tabulate(grid, payoff)
    simpson = _simpson_cells(grid, payoff, v)
    c_val = np.empty(n)
    c_left = np.empty(n)
    c_val[:-1] = v[:-1] - simpson
    c_val[-1] = v[-1]
    c_left[0] = 0.0  # mass below the grid is priced at the first node
    c_left[1:] = simpson - v[1:]
    return c_val, c_left


def level_objective(weights: Sequence[float]) -> np.ndarray:
    """Coefficients of ``sum_i weights[i] * H(x_i)`` (density-style pairing)."""
    return np.asarray(weights, dtype=float)


def expect_payoff(h: PiecewiseCdf, payoff) -> float:
    """Exact ``int payoff dH`` for a cadlag piecewise-linear or step function."""
    grid = h.grid
    v = np.asarray(h.evaluate(grid, "right"), dtype=float)
    lft = np.asarray(h.evaluate(grid, "left"), dtype=float)
    p = _tabulate(grid, payoff)
    total = float(p[0] * lft[0])  # below-grid mass priced at the first node
    total += float(np.sum(p * (v - lft)))
    if h.kind == STEP:
        return total
    simpson = _simpson_cells(grid, payoff, p)
    total += float(np.sum(simpson * (lft[1:] - v[:-1])))
    return total
