"""Exact solvers for unconstrained, fairness-constrained and relaxed selection."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .core import (
    GroupSpec,
    ModelError,
    ThresholdPolicy,
    check_group_pair,
    inverse_selection_rate,
)
from .objectives import (
    SIGN_TOL,
    ConstraintWeights,
    OutcomeFn,
    PiecewiseLinearCurve,
    UtilityFn,
    group_utility,
    outcome_change,
    outcome_curve,
    per_group,
    tpr,
    transfer_curve,
    utility_curve,
    utility_in_constraint,
)

SOFT_TOL = 1e-8


class PreconditionError(ValueError):
    """Solver inputs violate a requirement of the solver."""


@dataclass(frozen=True)
class GroupDecision:
    """Optimal selection for one group."""

    interval: tuple[float, float]
    beta: float
    policy: ThresholdPolicy
    tau: np.ndarray
    utility: float
    tpr: float
    delta_mu: float | None


@dataclass(frozen=True)
class SolverResult:
    """Solution of one criterion for both groups.

    ``beta`` is the canonical (leftmost) optimal rate per group and
    ``interval`` the full maximizing interval.  Constraint-based criteria
    also report the interval in constraint units.
    """

    criterion: str
    groups: tuple[GroupDecision, GroupDecision]
    utility: float
    constraint_interval: tuple[float, float] | None = None
    extras: dict = field(default_factory=dict)

    @property
    def beta(self) -> tuple[float, float]:
        return self.groups[0].beta, self.groups[1].beta

    @property
    def intervals(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return self.groups[0].interval, self.groups[1].interval

    @property
    def policies(self) -> tuple[np.ndarray, np.ndarray]:
        return self.groups[0].tau, self.groups[1].tau


def _check_monotone(groups, us, ws=None):
    for j, (g, u) in enumerate(zip(groups, us)):
        if u.values.size != g.C:
            raise ModelError("utility length does not match the score grid")
        ratio = u.values if ws is None else u.values / ws[j]
        r = ratio[g.pmf > 0]
        if np.any(np.diff(r) < -SIGN_TOL * np.maximum(1.0, np.abs(r[1:]))):
            what = "utility" if ws is None else "utility / constraint weight"
            raise PreconditionError(f"{what} must be non-decreasing in the score")


def _decision(group: GroupSpec, interval, u: UtilityFn,
              delta: OutcomeFn | None) -> GroupDecision:
    lo, hi = interval
    policy = inverse_selection_rate(group.dist, min(max(lo, 0.0), 1.0))
    tau = policy.to_policy(group.C)
    return GroupDecision(
        interval=(float(lo), float(hi)),
        beta=float(lo),
        policy=policy,
        tau=tau,
        utility=group_utility(group, tau, u),
        tpr=tpr(group, tau) if np.dot(group.pmf, group.rho) > 0 else float("nan"),
        delta_mu=None if delta is None else outcome_change(group, tau, delta),
    )


def _finish(criterion, groups, intervals, us, delta, **kw) -> SolverResult:
    ds = per_group(delta) if delta is not None else (None, None)
    decisions = tuple(_decision(g, iv, u, d) for g, iv, u, d in zip(groups, intervals, us, ds))
    total = sum(g.proportion * d.utility for g, d in zip(groups, decisions))
    return SolverResult(criterion, decisions, float(total), **kw)


def solve_maxutil(groups: Sequence[GroupSpec], u, delta=None) -> SolverResult:
    """Maximize utility separately in each group."""
    gs = check_group_pair(groups)
    us = per_group(u)
    _check_monotone(gs, us)
    intervals = [utility_curve(g, ui).argmax_interval() for g, ui in zip(gs, us)]
    return _finish("maxutil", gs, intervals, us, delta)


def sum_curves(terms, upper: float) -> PiecewiseLinearCurve:
    """Weighted sum of piecewise-linear curves on ``[0, upper]``."""
    xs = np.unique(np.concatenate([c.x[c.x < upper] for _, c in terms] + [[0.0, upper]]))
    y = sum(coef * c(xs) for coef, c in terms)
    slopes = np.array([sum(coef * c.right_derivative(x) for coef, c in terms)
                       for x in xs[:-1]])
    return PiecewiseLinearCurve(xs, np.asarray(y, dtype=float), slopes,
                                np.zeros(slopes.size, dtype=int))


@dataclass(frozen=True)
class ConstraintProblem:
    """Utility of each group expressed in units of a shared constraint value."""

    groups: tuple[GroupSpec, GroupSpec]
    utilities: tuple[UtilityFn, UtilityFn]
    weights: ConstraintWeights
    t_curves: tuple[PiecewiseLinearCurve, PiecewiseLinearCurve]
    transfer: tuple[PiecewiseLinearCurve, PiecewiseLinearCurve]
    t_max: float
    objective: PiecewiseLinearCurve

    @classmethod
    def build(cls, groups, u, w: ConstraintWeights) -> "ConstraintProblem":
        gs = check_group_pair(groups)
        us = per_group(u)
        ws = (w.w_a, w.w_b)
        for g, wj in zip(gs, ws):
            if wj.size != g.C:
                raise ModelError("constraint weight length does not match the score grid")
        _check_monotone(gs, us, ws)
        t_curves = tuple(utility_in_constraint(g, ui, wj) for g, ui, wj in zip(gs, us, ws))
        transfer = tuple(transfer_curve(g, wj) for g, wj in zip(gs, ws))
        t_max = float(min(tc.y[-1] for tc in transfer))
        objective = sum_curves([(g.proportion, c) for g, c in zip(gs, t_curves)], t_max)
        return cls(gs, us, w, t_curves, transfer, t_max, objective)

    def rates(self, t: float) -> tuple[float, float]:
        return tuple(tr.inverse(min(t, float(tr.y[-1]))) for tr in self.transfer)


def solve_linear_constraint(groups: Sequence[GroupSpec], u, w: ConstraintWeights,
                            delta=None, criterion: str | None = None) -> SolverResult:
    """Maximize utility subject to equal constraint values ``<pi_j * w_j, tau_j>``."""
    prob = ConstraintProblem.build(groups, u, w)
    t_lo, t_hi = prob.objective.argmax_interval()
    lo, hi = prob.rates(t_lo), prob.rates(t_hi)
    intervals = [(lo[0], hi[0]), (lo[1], hi[1])]
    return _finish(criterion or w.name, prob.groups, intervals, prob.utilities, delta,
                   constraint_interval=(t_lo, t_hi))


def solve_demparity(groups: Sequence[GroupSpec], u, delta=None) -> SolverResult:
    """Maximize utility subject to equal selection rates."""
    return solve_linear_constraint(groups, u, ConstraintWeights.demographic_parity(groups),
                                   delta, "demparity")


def solve_eqopt(groups: Sequence[GroupSpec], u, delta=None) -> SolverResult:
    """Maximize utility subject to equal true positive rates."""
    return solve_linear_constraint(groups, u, ConstraintWeights.equal_opportunity(groups),
                                   delta, "eqopt")


@dataclass(frozen=True)
class SoftPenalty:
    """Convex penalty ``phi`` on the constraint gap, with ``phi(0) = 0``.

    ``kind`` is ``"abs"``, ``"quadratic"`` or ``"table"``; a table gives
    ``phi`` at increasing gaps ``points`` and is interpolated linearly and
    mirrored to negative gaps.
    """

    kind: str = "abs"
    points: tuple[float, ...] | None = None
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("abs", "quadratic", "table"):
            raise ModelError(f"unknown penalty kind {self.kind!r}")
        if self.kind == "table":
            p = np.asarray(self.points, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if p.ndim != 1 or p.size < 2 or p.size != v.size:
                raise ModelError("penalty table needs matching points and values")
            if p[0] != 0.0 or v[0] != 0.0 or np.any(np.diff(p) <= 0):
                raise ModelError("penalty table must start at (0, 0) with increasing points")
            s = np.diff(v) / np.diff(p)
            if s[0] <= 0 or np.any(np.diff(s) < -SIGN_TOL):
                raise ModelError("penalty table must be convex and increasing")
            object.__setattr__(self, "points", tuple(p))
            object.__setattr__(self, "values", tuple(v))

    def __call__(self, d: float) -> float:
        a = abs(d)
        if self.kind == "abs":
            return a
        if self.kind == "quadratic":
            return a * a
        p, v = np.asarray(self.points), np.asarray(self.values)
        if a <= p[-1]:
            return float(np.interp(a, p, v))
        return float(v[-1] + (v[-1] - v[-2]) / (p[-1] - p[-2]) * (a - p[-1]))

    def _slope_abs(self, a: float, right: bool) -> float:
        if self.kind == "abs":
            return 1.0
        if self.kind == "quadratic":
            return 2.0 * a
        p, v = np.asarray(self.points), np.asarray(self.values)
        s = np.diff(v) / np.diff(p)
        k = np.searchsorted(p, a, side="right" if right else "left") - 1
        return float(s[min(max(k, 0), s.size - 1)])

    def right_derivative(self, d: float) -> float:
        if d >= 0:
            return self._slope_abs(d, True)
        return -self._slope_abs(-d, False)

    def left_derivative(self, d: float) -> float:
        if d > 0:
            return self._slope_abs(d, False)
        return -self._slope_abs(-d, True)


@dataclass(frozen=True)
class SoftResult:
    """Solution of the penalized problem.

    ``gap`` is ``t_A - t_B`` of the canonical solution and ``gap_range`` the
    range of gaps over all optimal solutions.
    """

    result: SolverResult
    lam: float
    penalty: SoftPenalty
    t: tuple[float, float]
    gap: float
    gap_range: tuple[float, float]
    objective: float
    hits_hard_constraint: bool


def _tilted(curve: PiecewiseLinearCurve, coef: float, tilt: float) -> PiecewiseLinearCurve:
    y = coef * curve.y + tilt * curve.x
    return PiecewiseLinearCurve(curve.x, y, coef * curve.slopes + tilt, curve.scores)


def _soft_exact_abs(prob: ConstraintProblem, lam: float):
    """Exact solution for ``phi = |.|`` by splitting on the sign of the gap."""
    (ca, cb), (ga, gb) = prob.t_curves, (g.proportion for g in prob.groups)
    if lam == 0.0:
        ia, ib = ca.argmax_interval(), cb.argmax_interval()
        return (ia[0], ib[0]), (ia[0] - ib[1], ia[1] - ib[0])
    # Gap below zero: A gains +lam per unit, B loses lam per unit.
    ia, ib = _tilted(ca, ga, lam).argmax_interval(), _tilted(cb, gb, -lam).argmax_interval()
    if ia[0] < ib[1] - SIGN_TOL:
        ta = ia[0]
        tb = max(ib[0], ta)
        return (ta, tb), (ia[0] - ib[1], min(0.0, ia[1] - ib[0]))
    ia, ib = _tilted(ca, ga, -lam).argmax_interval(), _tilted(cb, gb, lam).argmax_interval()
    if ib[0] < ia[1] - SIGN_TOL:
        tb = ib[0]
        ta = max(ia[0], tb)
        return (ta, tb), (max(0.0, ia[0] - ib[1]), ia[1] - ib[0])
    t_lo, _ = prob.objective.argmax_interval()
    return (t_lo, t_lo), (0.0, 0.0)


def _inner_best(prob: ConstraintProblem, d: float) -> tuple[float, float]:
    """Best ``t_A`` and objective for a fixed gap ``d = t_A - t_B``."""
    ca, cb = prob.t_curves
    ga, gb = (g.proportion for g in prob.groups)
    lo = max(0.0, d)
    hi = min(float(ca.x[-1]), float(cb.x[-1]) + d)
    shifted = PiecewiseLinearCurve(cb.x + d, cb.y, cb.slopes, cb.scores)
    xs = np.unique(np.concatenate([ca.x, shifted.x, [lo, hi]]))
    xs = xs[(xs >= lo) & (xs <= hi)]
    vals = ga * ca(xs) + gb * shifted(xs)
    k = int(np.argmax(vals))
    return float(xs[k]), float(vals[k])


def _soft_general(prob: ConstraintProblem, lam: float, phi: SoftPenalty):
    """Nested maximization for a general convex penalty."""
    ca, cb = prob.t_curves
    d_lo, d_hi = -float(cb.x[-1]), float(ca.x[-1])

    def neg(d):
        return -(_inner_best(prob, d)[1] - lam * phi(d))

    res = minimize_scalar(neg, bounds=(d_lo, d_hi), method="bounded",
                          options={"xatol": SOFT_TOL / 10})
    d = float(res.x)
    for cand in (0.0, d_lo, d_hi):
        if neg(cand) <= neg(d):
            d = cand
    ta, _ = _inner_best(prob, d)
    return (ta, ta - d), (d, d)


def solve_soft(groups: Sequence[GroupSpec], u, w: ConstraintWeights, lam: float,
               penalty: SoftPenalty | None = None, delta=None) -> SoftResult:
    """Maximize utility minus ``lam * phi(t_A - t_B)``.

    The absolute-value penalty is solved exactly; other convex penalties
    by a bounded one-dimensional search over the gap (tolerance 1e-8).
    """
    if lam < 0:
        raise ModelError("lambda must be non-negative")
    phi = penalty or SoftPenalty()
    prob = ConstraintProblem.build(groups, u, w)
    if phi.kind == "abs" or lam == 0.0:
        # without a penalty every kind reduces to the exact unpenalized split
        (ta, tb), gap_range = _soft_exact_abs(prob, lam)
    else:
        (ta, tb), gap_range = _soft_general(prob, lam, phi)
    ca, cb = prob.t_curves
    ta = min(max(ta, 0.0), float(ca.x[-1]))
    tb = min(max(tb, 0.0), float(cb.x[-1]))
    betas = (prob.transfer[0].inverse(ta), prob.transfer[1].inverse(tb))
    result = _finish(f"soft[{w.name}]", prob.groups, [(b, b) for b in betas],
                     prob.utilities, delta, constraint_interval=(ta, tb))
    gap = ta - tb
    objective = result.utility - lam * phi(gap)
    hits = lam > 0 and abs(gap) <= SOFT_TOL
    return SoftResult(result, float(lam), phi, (ta, tb), gap, gap_range, objective, hits)


def solve_outcome_based(groups: Sequence[GroupSpec], u, delta,
                        tolerance: float) -> SolverResult:
    """Maximize group A's outcome while losing at most ``tolerance`` utility on it.

    Group B keeps its utility-maximizing rate.
    """
    if tolerance < 0:
        raise ModelError("utility tolerance must be non-negative")
    gs = check_group_pair(groups)
    us = per_group(u)
    ds = per_group(delta)
    mu = solve_maxutil(gs, us, ds)
    beta_mu = mu.groups[0].beta
    beta_star = outcome_curve(gs[0], ds[0]).argmax_interval()[0]
    uc = utility_curve(gs[0], us[0])
    level = uc(beta_mu) - tolerance
    beta_max, _ = uc.superlevel_right_end(level, beta_mu, tol=0.0)
    beta = min(beta_star, beta_max)
    intervals = [(beta, beta), mu.groups[1].interval]
    return _finish("outcome", gs, intervals, us, ds,
                   extras={"beta_star": beta_star, "beta_max": beta_max,
                           "beta_maxutil": beta_mu, "tolerance": tolerance})


CRITERIA = ("maxutil", "demparity", "eqopt")


def solve(criterion: str, groups, u, delta=None, **kw) -> SolverResult:
    """Dispatch by criterion name."""
    if criterion == "maxutil":
        return solve_maxutil(groups, u, delta)
    if criterion == "demparity":
        return solve_demparity(groups, u, delta)
    if criterion == "eqopt":
        return solve_eqopt(groups, u, delta)
    if criterion == "outcome":
        return solve_outcome_based(groups, u, delta, kw.get("tolerance", 0.0))
    raise ModelError(f"unknown criterion {criterion!r}")
