"""Distributions of posterior quantiles: feasibility, construction, checks.

A signal splits a prior into finitely many posteriors that average back to
it.  Each posterior has a tau-quantile (an interval when multi-valued), a
selection rule picks one point per posterior, and the induced distribution
of selected quantiles is the object of interest.  The feasible set of such
distributions is exactly the monotone interval pinched between the right
and left truncations of the prior; the constructors here realize any
feasible target:

* :func:`construct_signal` works on atomic (step) priors.  The target is
  decomposed into extreme points of the grid interval; for each extreme
  point, every jump spawns one posterior made of two rank slices of the
  prior, a share ``tau`` drawn from below the jump's level and ``1 - tau``
  from above.  At anchored jumps the lower slice is exactly the pooled
  states of the paper's separated/pooled construction, so selected
  quantiles land on the jump locations and the mixture is Bayes-exact to
  machine precision.

* :func:`construct_signal_unique` works on continuous strictly increasing
  priors and produces posteriors whose tau-quantile is unique: each
  component's mass profile crosses the level ``tau`` strictly inside a
  designated grid cell.  The cell masses are balanced by a small transport
  LP so the mixture reproduces the prior exactly at every node.

An independent checker reports Bayes-plausibility gaps, exact quantile
distribution gaps under one-sided rules, and a seeded Monte Carlo
re-estimate with its Dvoretzky-Kiefer-Wolfowitz 95% band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cdf_core import (
    DEFAULT_TOL,
    PIECEWISE_LINEAR,
    STEP,
    CdfError,
    PiecewiseCdf,
    mix,
    rank_slice,
    step_from_atoms,
    truncation_bounds,
)
from .interval_core import (
    MonotoneInterval,
    contains,
    decompose_as_mixture,
    is_extreme_point,
)
from . import linear_solver as lps

__all__ = [
    "InfeasibleTargetError",
    "FiniteSignal",
    "SelectionRule",
    "ConstructionPlan",
    "PooledBlock",
    "VerificationReport",
    "UniquenessReport",
    "quantile_interval",
    "quantile_distribution",
    "feasible",
    "construct_signal",
    "construct_signal_unique",
    "verify_signal",
    "iterated_quantile_range",
    "random_signal",
    "dkw_band",
]


class InfeasibleTargetError(CdfError):
    """Target distribution lies outside the feasible interval."""


# -- signals and selection rules ----------------------------------------------------


@dataclass(frozen=True)
class FiniteSignal:
    """Finite list of (weight, posterior) pairs averaging to the prior."""

    components: tuple[tuple[float, PiecewiseCdf], ...]
    prior: PiecewiseCdf
    bayes_tol: float = DEFAULT_TOL

    def __post_init__(self) -> None:
        comps = tuple((float(w), g) for w, g in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise CdfError("signal needs at least one component")
        weights = np.array([w for w, _ in comps])
        if np.any(weights < -1e-15):
            raise CdfError("component weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise CdfError(f"component weights sum to {weights.sum()!r}")
        gap = bayes_gap(comps, self.prior)
        if gap > self.bayes_tol:
            raise CdfError(f"posteriors average {gap:.3e} away from the prior")

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    def to_json_dict(self) -> dict:
        return {
            "prior": self.prior.to_json_dict(),
            "components": [
                {"weight": w, "posterior": g.to_json_dict()} for w, g in self.components
            ],
        }

    @staticmethod
    def from_json_dict(doc: dict) -> "FiniteSignal":
        extra = set(doc) - {"prior", "components"}
        if extra:
            raise CdfError(f"unexpected fields in FiniteSignal JSON: {sorted(extra)}")
        comps = tuple(
            (float(c["weight"]), PiecewiseCdf.from_json_dict(c["posterior"]))
            for c in doc["components"]
        )
        return FiniteSignal(comps, PiecewiseCdf.from_json_dict(doc["prior"]))


def bayes_gap(components: Sequence[tuple[float, PiecewiseCdf]], prior: PiecewiseCdf) -> float:
    """Max pointwise gap between the weighted posterior average and the prior."""
    grid = prior.grid
    for _, g in components:
        grid = np.union1d(grid, g.grid)
    acc_v = np.zeros(grid.size)
    acc_l = np.zeros(grid.size)
    for w, g in components:
        acc_v += w * np.asarray(g.evaluate(grid, "right"))
        acc_l += w * np.asarray(g.evaluate(grid, "left"))
    gv = np.max(np.abs(acc_v - prior.evaluate(grid, "right")))
    gl = np.max(np.abs(acc_l - prior.evaluate(grid, "left")))
    return float(max(gv, gl))


ALWAYS_LOWER = "always_lower"
ALWAYS_UPPER = "always_upper"
PER_COMPONENT = "per_component"


@dataclass(frozen=True)
class SelectionRule:
    """Choice of one tau-quantile per posterior when the set is an interval."""

    mode: str = ALWAYS_LOWER
    points: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.mode not in (ALWAYS_LOWER, ALWAYS_UPPER, PER_COMPONENT):
            raise CdfError(f"unknown selection mode {self.mode!r}")
        if self.mode == PER_COMPONENT and self.points is None:
            raise CdfError("per-component selection needs explicit points")

    @staticmethod
    def lower() -> "SelectionRule":
        return SelectionRule(ALWAYS_LOWER)

    @staticmethod
    def upper() -> "SelectionRule":
        return SelectionRule(ALWAYS_UPPER)

    @staticmethod
    def at_points(points: Sequence[float]) -> "SelectionRule":
        return SelectionRule(PER_COMPONENT, tuple(float(p) for p in points))

    def to_json_dict(self) -> dict:
        return {"mode": self.mode, "points": None if self.points is None else list(self.points)}


def quantile_interval(g: PiecewiseCdf, tau: float) -> tuple[float, float]:
    """The closed set of tau-quantiles ``[G^{-1}(tau), G^{-1}(tau+)]``."""
    return g.quantile(tau, "lower"), g.quantile(tau, "upper")


def quantile_distribution(
    signal: FiniteSignal, tau: float, rule: SelectionRule = SelectionRule()
) -> PiecewiseCdf:
    """Exact CDF of the selected tau-quantile across components."""
    points = []
    for k, (w, g) in enumerate(signal.components):
        lo, hi = quantile_interval(g, tau)
        if rule.mode == ALWAYS_LOWER:
            p = lo
        elif rule.mode == ALWAYS_UPPER:
            p = hi
        else:
            if len(rule.points) != len(signal.components):
                raise CdfError("selection points must match the component count")
            p = rule.points[k]
            if not (lo - 1e-12 <= p <= hi + 1e-12):
                raise CdfError(
                    f"selected point {p} outside the quantile set [{lo}, {hi}]"
                )
        points.append(p)
    return step_from_atoms(points, signal.weights)


def feasible(h: PiecewiseCdf, f: PiecewiseCdf, tau: float, tol: float = DEFAULT_TOL) -> bool:
    """Whether ``h`` is a distribution of posterior tau-quantiles for prior ``f``."""
    f_right, f_left = truncation_bounds(f, tau)
    return contains(MonotoneInterval(f_right, f_left), h, tol)


# -- the atomic construction -----------------------------------------------------------


@dataclass(frozen=True)
class PooledBlock:
    """One pooled posterior: the states and the quantile point it supports."""

    x_low: float
    x_high: float
    weight: float
    quantile: float


@dataclass(frozen=True)
class ConstructionPlan:
    """Skeleton of the signal built for (the dominant extreme point of) a target."""

    eta: float
    x_hat: float | None
    y_low: float | None
    y_high: float | None
    f_hat: PiecewiseCdf | None
    f_tilde: PiecewiseCdf | None
    alpha: float
    pooled_left: tuple[PooledBlock, ...]
    pooled_right: tuple[PooledBlock, ...]

    def to_json_dict(self) -> dict:
        return {
            "eta": self.eta,
            "x_hat": self.x_hat,
            "y_low": self.y_low,
            "y_high": self.y_high,
            "f_hat": None if self.f_hat is None else self.f_hat.to_json_dict(),
            "f_tilde": None if self.f_tilde is None else self.f_tilde.to_json_dict(),
            "alpha": self.alpha,
            "pooled_left": [vars(b) for b in self.pooled_left],
            "pooled_right": [vars(b) for b in self.pooled_right],
        }


def _jumps(h: PiecewiseCdf, grid: np.ndarray) -> list[tuple[float, float, float, float]]:
    """(location, weight, level_below, level_above) for every jump of ``h``."""
    hv = np.asarray(h.evaluate(grid, "right"))
    hl = np.asarray(h.evaluate(grid, "left"))
    out = []
    for z, lo_u, hi_u in zip(grid, hl, hv):
        if hi_u - lo_u > 1e-14:
            out.append((float(z), float(hi_u - lo_u), float(lo_u), float(hi_u)))
    return out


def _construct_for_extreme(
    e: PiecewiseCdf,
    f: PiecewiseCdf,
    tau: float,
    f_right: PiecewiseCdf,
    f_left: PiecewiseCdf,
    tol: float = DEFAULT_TOL,
):
    """Signal components for one extreme point of the truncation interval.

    Every jump of the target receives one posterior assembled from two rank
    slices of the prior: mass ``tau`` from the band ``(tau u1, tau u2]`` and
    mass ``1 - tau`` from ``(tau + (1-tau) u1, tau + (1-tau) u2]``, where
    ``(u1, u2]`` is the jump's level band.  Containment makes the lower
    slice sit weakly below the jump and the upper slice weakly above, so
    the jump location is always a valid tau-quantile of its posterior; at
    bound-anchored jumps the slices are exactly the paper's separated or
    pooled states.
    """
    grid = np.union1d(np.union1d(f.grid, e.grid), f_right.grid)
    comps: list[tuple[float, PiecewiseCdf]] = []
    points: list[float] = []
    pooled_left: list[PooledBlock] = []
    pooled_right: list[PooledBlock] = []
    central = None
    fl_v = np.asarray(f_left.evaluate(grid, "right"))
    fr_l = np.asarray(f_right.evaluate(grid, "left"))
    fl_at = {float(z): float(v) for z, v in zip(grid, fl_v)}
    frl_at = {float(z): float(v) for z, v in zip(grid, fr_l)}
    for z, w, u1, u2 in _jumps(e, grid):
        below = rank_slice(f, tau * u1, tau * u2)
        above = rank_slice(f, tau + (1 - tau) * u1, tau + (1 - tau) * u2)
        g = mix([(tau, below), (1.0 - tau, above)])
        comps.append((w, g))
        points.append(z)
        left_anchored = abs(u2 - fl_at[z]) <= 10 * tol
        right_anchored = abs(u1 - frl_at[z]) <= 10 * tol
        if left_anchored and not right_anchored:
            if below.grid[0] < z - 1e-12:
                pooled_left.append(PooledBlock(float(below.grid[0]), z, w, z))
        elif right_anchored and not left_anchored:
            if above.grid[-1] > z + 1e-12:
                pooled_right.append(PooledBlock(z, float(above.grid[-1]), w, z))
        else:
            central = (z, w, below, above, g)
    if central is not None:
        z, w, below, above, g = central
        eta = w
        x_hat = z
        y_low = float(below.grid[0])
        y_high = float(above.grid[-1])
        f_hat = g
        if w < 1.0 - 1e-12:
            rest = [(cw / (1.0 - w), cg) for cw, cg in comps if cg is not g]
            f_tilde = mix([(cw, cg) for cw, cg in rest]) if rest else None
        else:
            f_tilde = None
    else:
        eta, x_hat, y_low, y_high, f_hat, f_tilde = 0.0, None, None, None, None, None
        if comps:
            f_tilde = f
    pivot = x_hat if x_hat is not None else f.quantile(tau, "lower")
    w_left = sum(w for (w, _), p in zip(comps, points) if p < pivot)
    w_right = 1.0 - w_left - eta
    denom = w_left * (1 - tau) + w_right * tau
    alpha = float(w_left * (1 - tau) / denom) if denom > 0 else 0.0
    plan = ConstructionPlan(
        eta,
        x_hat,
        y_low,
        y_high,
        f_hat,
        f_tilde,
        alpha,
        tuple(pooled_left),
        tuple(pooled_right),
    )
    return comps, points, plan


def construct_signal(
    h: PiecewiseCdf, f: PiecewiseCdf, tau: float, max_components: int = 0
) -> tuple[FiniteSignal, SelectionRule, ConstructionPlan]:
    """Signal and selection rule whose quantile distribution equals ``h``.

    Requires an atomic (step) prior with matching-step target inside the
    truncation interval.  General targets are decomposed into extreme
    points first; the per-extreme constructions are mixed and duplicate
    posteriors merged.  The returned plan describes the dominant extreme
    point's skeleton.
    """
    f.require_cdf()
    if f.kind != STEP or h.kind != STEP:
        raise CdfError("construct_signal needs step (atomic) prior and target")
    if not (0.0 < tau < 1.0):
        raise CdfError("tau must lie in (0,1)")
    f_right, f_left = truncation_bounds(f, tau)
    interval = MonotoneInterval(f_right, f_left)
    if not contains(interval, h):
        raise InfeasibleTargetError("target is not a feasible quantile distribution")
    grid = np.union1d(interval.grid(), h.grid)
    h = h.on_grid(grid)
    if is_extreme_point(interval, h).is_extreme:
        parts = [(1.0, h)]
    else:
        parts = decompose_as_mixture(interval, h, max_components)
    merged: dict[tuple, list] = {}
    plans: list[tuple[float, ConstructionPlan]] = []
    for weight, e in parts:
        comps, points, plan = _construct_for_extreme(e, f, tau, f_right, f_left)
        plans.append((weight, plan))
        for (w, g), p in zip(comps, points):
            gg = g.on_grid(grid)
            key = (round(p / 1e-12), tuple(np.round(gg.values / 1e-10).astype(np.int64)))
            if key in merged:
                merged[key][0] += weight * w
            else:
                merged[key] = [weight * w, gg, p]
    total = sum(entry[0] for entry in merged.values())
    comps = tuple((entry[0] / total, entry[1]) for entry in merged.values())
    points = tuple(entry[2] for entry in merged.values())
    signal = FiniteSignal(comps, f)
    rule = SelectionRule.at_points(points)
    plan = max(plans, key=lambda t: t[0])[1]
    induced = quantile_distribution(signal, tau, rule)
    gap = _sup_gap(induced, h)
    if gap > 1e-6:
        raise CdfError(f"internal error: constructed quantile gap {gap:.2e}")
    return signal, rule, plan


def _sup_gap(a: PiecewiseCdf, b: PiecewiseCdf) -> float:
    grid = np.union1d(a.grid, b.grid)
    gv = np.max(np.abs(np.asarray(a.evaluate(grid)) - np.asarray(b.evaluate(grid))))
    gl = np.max(
        np.abs(np.asarray(a.evaluate(grid, "left")) - np.asarray(b.evaluate(grid, "left")))
    )
    return float(max(gv, gl))


# -- unique-quantile construction -------------------------------------------------------


@dataclass(frozen=True)
class UniquenessReport:
    weights: tuple[float, ...]
    lower_quantiles: tuple[float, ...]
    upper_quantiles: tuple[float, ...]
    unique: tuple[bool, ...]
    bayes_gap: float
    node_gap: float
    margin: float

    @property
    def all_unique(self) -> bool:
        return all(self.unique)


def construct_signal_unique(
    h: PiecewiseCdf, f: PiecewiseCdf, tau: float, epsilon: float
) -> tuple[FiniteSignal, UniquenessReport]:
    """Signal inducing ``h`` whose posteriors all have a unique tau-quantile.

    Requires a strictly increasing piecewise-linear prior (full support on
    an interval) and ``h`` inside the epsilon-perturbed truncation
    interval.  One component is created per grid cell carrying target
    mass; its posterior accumulates exactly ``tau`` strictly inside that
    cell with a guaranteed margin, so lower and upper quantiles coincide.
    Cell masses come from a transport feasibility LP that reproduces the
    prior exactly at every node.
    """
    if epsilon <= 0:
        raise CdfError("epsilon must be positive for the unique construction")
    f.require_cdf()
    if f.kind != PIECEWISE_LINEAR:
        raise CdfError("unique construction needs a piecewise-linear prior")
    f_right, f_left = truncation_bounds(f, tau, epsilon)
    interval = MonotoneInterval(f_right, f_left)
    if not contains(interval, h):
        raise InfeasibleTargetError(
            "target is outside the perturbed truncation interval"
        )
    grid = np.union1d(np.union1d(f.grid, h.grid), interval.grid())
    fv = np.asarray(f.evaluate(grid, "right"))
    cell_mass = np.diff(fv)
    if np.any(cell_mass <= 1e-12):
        raise CdfError("prior must be strictly increasing on its grid (full support)")
    node_vals = np.asarray(h.evaluate(grid, "right"))
    if node_vals[0] > 1e-9:
        raise InfeasibleTargetError("target places mass at or below the bottom node")
    w = np.diff(node_vals)
    if w.sum() <= 1e-12:
        raise InfeasibleTargetError("target carries no mass")
    n_cells = cell_mass.size
    delta0 = min(epsilon, tau, 1.0 - tau) / 2.0

    def attempt(cell_w):
        active_ = np.nonzero(cell_w > 1e-12)[0]
        weights_ = cell_w[active_] / cell_w[active_].sum()
        for shrink in (1.0, 0.25, 0.0625, 1e-3, 1e-6):
            delta = max(delta0 * shrink, 1e-9)
            try:
                m = _transport_masses(cell_mass, weights_, active_, tau, delta, n_cells)
                return m, weights_, active_, delta
            except lps.LpInfeasibleError:
                continue
        return None

    got = attempt(w)
    if got is None:
        # Boundary targets put every quantile weakly on one side of the
        # prior's tau-quantile; the sub-(or super-)median state budget is
        # then exactly tight and atom-free components cannot also supply
        # the strictly-positive mass uniqueness needs just past each
        # crossing.  Shifting a kappa-sliver of the boundary jump into the
        # adjacent cell opens the budget at a quantile-distribution cost
        # below the 1e-6 reproduction tolerance.
        kappa = 2e-7
        m_idx = int(np.searchsorted(grid, f.quantile(tau, "lower")))
        w2 = w.copy()
        shifted = False
        if m_idx >= 1 and m_idx < n_cells and node_vals[m_idx] >= 1.0 - 1e-9:
            take = min(kappa, w2[m_idx - 1])
            w2[m_idx - 1] -= take
            w2[m_idx] += take
            shifted = shifted or take > 0
        if m_idx >= 2 and node_vals[m_idx - 1] <= 1e-9 and w2[m_idx - 1] > 0:
            take = min(kappa, w2[m_idx - 1])
            w2[m_idx - 1] -= take
            w2[m_idx - 2] += take
            shifted = shifted or take > 0
        if shifted:
            got = attempt(w2)
    if got is None:
        raise InfeasibleTargetError(
            "no unique-quantile transport exists at this grid resolution"
        )
    masses, weights, active, used_delta = got
    comps = []
    lows, ups, uniq = [], [], []
    for row, c in enumerate(active):
        cum = np.cumsum(masses[row])
        if abs(cum[-1] - 1.0) > 1e-8:
            raise CdfError("internal error: component mass does not sum to one")
        cum[-1] = 1.0
        # snap an exact tau hit at the crossing node so both generalized
        # inverses return the node bit-for-bit
        if abs(cum[c] - tau) <= 1e-11:
            cum[c] = tau
        values = np.maximum.accumulate(np.concatenate(([0.0], np.clip(cum, 0.0, 1.0))))
        g = PiecewiseCdf(grid, values, PIECEWISE_LINEAR)
        comps.append((float(weights[row]), g))
        lo_q = g.quantile(tau, "lower")
        up_q = g.quantile(tau, "upper")
        lows.append(lo_q)
        ups.append(up_q)
        uniq.append(lo_q == up_q)
    signal = FiniteSignal(tuple(comps), f, bayes_tol=1e-8)
    induced = quantile_distribution(signal, tau, SelectionRule.lower())
    node_gap = float(
        np.max(np.abs(np.asarray(induced.evaluate(grid)) - np.asarray(h.evaluate(grid))))
    )
    report = UniquenessReport(
        tuple(float(x) for x in weights),
        tuple(lows),
        tuple(ups),
        tuple(uniq),
        bayes_gap(comps, f),
        node_gap,
        float(used_delta),
    )
    return signal, report


def _transport_masses(cell_mass, weights, active, tau, delta, n_cells):
    """Per-component cell masses for the unique-quantile construction.

    Component ``r`` must cross level tau strictly inside cell ``active[r]``:
    mass before the cell at most ``tau - delta``, mass through the cell at
    least ``tau``, and mass through the next cell at least ``tau + delta``.
    Columns are component-cell pairs; rows balance the prior cell by cell.
    """
    k = weights.size
    nvar = k * n_cells
    a_eq = []
    b_eq = []
    for r in range(k):
        row = np.zeros(nvar)
        row[r * n_cells : (r + 1) * n_cells] = 1.0
        a_eq.append(row)
        b_eq.append(1.0)
    for c in range(n_cells):
        row = np.zeros(nvar)
        for r in range(k):
            row[r * n_cells + c] = weights[r]
        a_eq.append(row)
        b_eq.append(cell_mass[c])
    a_ub = []
    b_ub = []
    for r, c in enumerate(active):
        pre = np.zeros(nvar)
        pre[r * n_cells : r * n_cells + c] = 1.0
        a_ub.append(pre)
        b_ub.append(tau - delta)
        thr = np.zeros(nvar)
        thr[r * n_cells : r * n_cells + c + 1] = -1.0
        a_ub.append(thr)
        b_ub.append(-tau)
        nxt = np.zeros(nvar)
        end = min(c + 2, n_cells)
        nxt[r * n_cells : r * n_cells + end] = -1.0
        a_ub.append(nxt)
        b_ub.append(-(tau + delta))
    x, _ = lps.simplex_solve(np.zeros(nvar), a_ub, b_ub, a_eq, b_eq)
    return x.reshape(k, n_cells)


# -- verification -----------------------------------------------------------------------


def dkw_band(n: int, confidence: float = 0.95) -> float:
    """Dvoretzky-Kiefer-Wolfowitz sup-norm band for an empirical CDF."""
    if n <= 0:
        return float("inf")
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * n))


@dataclass(frozen=True)
class VerificationReport:
    weight_sum_gap: float
    bayes_gap: float
    exact_gap_lower: float
    exact_gap_upper: float
    exact_gap_rule: float | None
    mc_draws: int
    mc_quantile_gap: float | None
    mc_state_gap: float | None
    mc_band: float | None
    seed: int | None

    def to_json_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def verify_signal(
    components: Sequence[tuple[float, PiecewiseCdf]] | FiniteSignal,
    f: PiecewiseCdf,
    tau: float,
    target: PiecewiseCdf,
    mc_draws: int = 0,
    seed: int = 0,
    rule: SelectionRule | None = None,
) -> VerificationReport:
    """Independent checks of a signal against a target quantile distribution.

    Accepts raw (possibly invalid) component lists: violations show up as
    reported gaps rather than exceptions, thresholds are the caller's
    business.
    """
    if isinstance(components, FiniteSignal):
        comp_list = list(components.components)
    else:
        comp_list = [(float(w), g) for w, g in components]
    wsum = sum(w for w, _ in comp_list)
    weight_gap = abs(wsum - 1.0)
    bgap = bayes_gap(comp_list, f)

    def induced(which: str, pts=None) -> PiecewiseCdf:
        points, ws = [], []
        for idx, (w, g) in enumerate(comp_list):
            lo, hi = quantile_interval(g, tau)
            if which == "lower":
                points.append(lo)
            elif which == "upper":
                points.append(hi)
            else:
                points.append(pts[idx])
            ws.append(w)
        return step_from_atoms(points, ws, renormalize=True)

    gap_lower = _sup_gap(induced("lower"), target)
    gap_upper = _sup_gap(induced("upper"), target)
    gap_rule = None
    sel_points = None
    if rule is not None:
        if rule.mode == ALWAYS_LOWER:
            gap_rule, sel_points = gap_lower, None
        elif rule.mode == ALWAYS_UPPER:
            gap_rule, sel_points = gap_upper, None
        else:
            sel_points = rule.points
            gap_rule = _sup_gap(induced("points", sel_points), target)
    mc_q = mc_s = band = None
    if mc_draws > 0:
        rng = np.random.default_rng(seed)
        ws = np.array([max(w, 0.0) for w, _ in comp_list])
        ws = ws / ws.sum()
        idx = rng.choice(len(comp_list), size=mc_draws, p=ws)
        if sel_points is not None:
            qpts = np.array(sel_points)
        elif rule is not None and rule.mode == ALWAYS_UPPER:
            qpts = np.array([quantile_interval(g, tau)[1] for _, g in comp_list])
        else:
            qpts = np.array([quantile_interval(g, tau)[0] for _, g in comp_list])
        qdraws = qpts[idx]
        mc_q = _empirical_sup_gap(qdraws, target)
        states = np.empty(mc_draws)
        us = rng.uniform(size=mc_draws)
        for k_idx, (_, g) in enumerate(comp_list):
            mask = idx == k_idx
            if mask.any():
                states[mask] = _inverse_sample(g, us[mask])
        mc_s = _empirical_sup_gap(states, f)
        band = dkw_band(mc_draws)
    return VerificationReport(
        weight_gap,
        bgap,
        gap_lower,
        gap_upper,
        gap_rule,
        mc_draws,
        mc_q,
        mc_s,
        band,
        seed if mc_draws > 0 else None,
    )


def _inverse_sample(g: PiecewiseCdf, us: np.ndarray) -> np.ndarray:
    grid = g.grid
    vals = np.asarray(g.evaluate(grid, "right"))
    lls = np.asarray(g.evaluate(grid, "left"))
    out = np.empty(us.size)
    if g.kind == STEP:
        idx = np.searchsorted(vals, us, side="left")
        idx = np.clip(idx, 0, grid.size - 1)
        return grid[idx]
    # piecewise linear: invert on each cell, atoms map to their node
    idx = np.searchsorted(vals, us, side="left")
    idx = np.clip(idx, 0, grid.size - 1)
    for i, u in enumerate(us):
        j = idx[i]
        if j == 0 or u >= lls[j]:
            out[i] = grid[j]
            continue
        lo_v, hi_v = vals[j - 1], lls[j]
        t = (u - lo_v) / (hi_v - lo_v) if hi_v > lo_v else 1.0
        out[i] = grid[j - 1] + t * (grid[j] - grid[j - 1])
    return out


def _empirical_sup_gap(draws: np.ndarray, target: PiecewiseCdf) -> float:
    xs = np.sort(draws)
    n = xs.size
    # sup over the jump points of the empirical CDF against the target;
    # ties share one jump, so count strict predecessors for the left limit
    tv = np.asarray(target.evaluate(xs, "right"))
    tl = np.asarray(target.evaluate(xs, "left"))
    ecdf_hi = np.searchsorted(xs, xs, side="right") / n
    ecdf_lo = np.searchsorted(xs, xs, side="left") / n
    return float(max(np.max(np.abs(ecdf_hi - tv)), np.max(np.abs(tl - ecdf_lo))))


# -- law of iterated quantiles ----------------------------------------------------------


def iterated_quantile_range(f: PiecewiseCdf, tau: float, q: float) -> tuple[float, float]:
    """Feasible tau-quantiles of posterior q-quantiles: a closed interval."""
    f_right, f_left = truncation_bounds(f, q)
    return f_left.quantile(tau, "lower"), f_right.quantile(tau, "upper")


# -- random signals for property tests ---------------------------------------------------


def random_signal(f: PiecewiseCdf, n_components: int, seed: int) -> FiniteSignal:
    """Random Bayes-plausible split of an atomic prior into posteriors."""
    if f.kind != STEP:
        raise CdfError("random_signal needs an atomic prior")
    rng = np.random.default_rng(seed)
    pos, mass = f.atoms()
    alloc = rng.gamma(1.0, 1.0, size=(n_components, pos.size))
    alloc /= alloc.sum(axis=0, keepdims=True)
    alloc *= mass
    weights = alloc.sum(axis=1)
    keep = weights > 1e-12
    alloc, weights = alloc[keep], weights[keep]
    comps = []
    for r in range(alloc.shape[0]):
        comps.append((float(weights[r]), step_from_atoms(pos, alloc[r] / weights[r])))
    total = sum(w for w, _ in comps)
    comps = [(w / total, g) for w, g in comps]
    return FiniteSignal(tuple(comps), f, bayes_tol=1e-8)
