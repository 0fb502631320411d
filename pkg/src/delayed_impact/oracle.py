"""Brute-force checks: discretized policy enumeration and structural verifiers.

The enumeration never uses thresholds, quantiles or transfer maps, so it
checks the exact solvers by an independent route.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import get_kernels
from .analysis import Problem
from .core import (
    GroupSpec,
    ModelError,
    ScoreDistribution,
    check_group_pair,
    inverse_selection_rate,
    policies_equivalent,
    selection_rate,
)
from .objectives import (
    SIGN_TOL,
    ConstraintWeights,
    OutcomeFn,
    PiecewiseLinearCurve,
    UtilityFn,
    group_utility,
    outcome_change,
    per_group,
)
from .solvers import SolverResult


class OracleSizeError(ModelError):
    """The instance is too large to enumerate."""


@dataclass(frozen=True)
class OracleConfig:
    """Grid resolution ``k`` (policies take values ``i / k``), size limit and
    the slack allowed on the fairness constraint."""

    k: int = 10
    max_scores: int = 4
    constraint_tol: float = 1e-4
    backend: str | None = None


@dataclass(frozen=True)
class OracleResult:
    objective: float
    taus: tuple[np.ndarray, np.ndarray]
    constraint_gap: float
    bound: float
    n_policies: int


def _decode(n: int, C: int, k: int) -> np.ndarray:
    digits = np.zeros(C)
    for x in range(C):
        n, d = divmod(n, k + 1)
        digits[x] = d
    return digits / k


def oracle_solve(groups, u, criterion: str, cfg: OracleConfig = OracleConfig(),
                 w: ConstraintWeights | None = None) -> OracleResult:
    """Best policy pair on the grid ``{0, 1/k, ..., 1}^C`` for each group.

    ``criterion`` is ``"maxutil"``, ``"demparity"``, ``"eqopt"`` or
    ``"linear"`` (with explicit weights ``w``).  Constrained criteria accept
    pairs whose constraint values differ by at most ``cfg.constraint_tol``.
    """
    a, b = check_group_pair(groups)
    if a.C > cfg.max_scores:
        raise OracleSizeError(f"{a.C} scores exceed the enumeration limit {cfg.max_scores}")
    if cfg.k < 1:
        raise ModelError("grid resolution k must be positive")
    ua, ub = (f.values for f in per_group(u))
    if criterion == "demparity":
        w = ConstraintWeights.demographic_parity((a, b))
    elif criterion == "eqopt":
        w = ConstraintWeights.equal_opportunity((a, b))
    elif criterion == "linear":
        if w is None:
            raise ModelError("linear criterion needs constraint weights")
    elif criterion != "maxutil":
        raise ModelError(f"unknown criterion {criterion!r}")
    ker = get_kernels(cfg.backend)
    k = cfg.k
    ones = np.ones(a.C)
    wa = ones if w is None else w.w_a
    wb = ones if w is None else w.w_b
    ra, va = ker.policy_values(a.pmf * wa, a.pmf * ua, k)
    rb, vb = ker.policy_values(b.pmf * wb, b.pmf * ub, k)
    if criterion == "maxutil":
        i, j = int(np.argmax(va)), int(np.argmax(vb))
        best = a.proportion * va[i] + b.proportion * vb[j]
    else:
        best, i, j = ker.best_pair(ra, va, rb, vb, a.proportion, b.proportion,
                                   cfg.constraint_tol)
        if i < 0:
            raise ModelError("no grid policy pair meets the constraint tolerance")
    taus = (_decode(int(i), a.C, k), _decode(int(j), b.C, k))
    gap = 0.0 if criterion == "maxutil" else abs(ra[i] - rb[j])
    bound = float(max(np.abs(ua).max(), np.abs(ub).max())) / k
    return OracleResult(float(best), taus, float(gap), bound, int(ra.size))


def _constraint_weights(result: SolverResult, groups):
    name = result.criterion
    if name == "demparity":
        return ConstraintWeights.demographic_parity(groups)
    if name == "eqopt":
        return ConstraintWeights.equal_opportunity(groups)
    return None


def constraint_residual(result: SolverResult, groups,
                        w: ConstraintWeights | None = None) -> float:
    """Gap between the groups' constraint values under the solver's policies."""
    w = w or _constraint_weights(result, groups)
    if w is None:
        return 0.0
    a, b = check_group_pair(groups)
    ta, tb = result.policies
    return abs(float(np.dot(a.pmf * w.w_a, ta)) - float(np.dot(b.pmf * w.w_b, tb)))


def verify_solver_against_oracle(result: SolverResult, oracle: OracleResult, groups,
                                 tolerance: float | None = None,
                                 w: ConstraintWeights | None = None) -> bool:
    """The exact optimum is not beaten by the grid optimum beyond the grid
    bound, and the exact solution meets its constraint."""
    slack = oracle.bound if tolerance is None else tolerance
    ok = result.utility >= oracle.objective - slack
    return bool(ok and constraint_residual(result, groups, w) <= SIGN_TOL)


def is_threshold_policy(dist: ScoreDistribution, tau) -> bool:
    """Whether ``tau`` is equivalent to the threshold policy with its rate."""
    beta = min(selection_rate(dist, tau), 1.0)
    thr = inverse_selection_rate(dist, beta).to_policy(dist.C)
    return policies_equivalent(dist, tau, thr)


def verify_threshold_dominance(group: GroupSpec, tau, u: UtilityFn,
                               delta: OutcomeFn, tol: float = SIGN_TOL) -> bool:
    """The threshold policy with the same rate does at least as well on
    utility and outcome, strictly on both unless the policies are equivalent."""
    beta = min(selection_rate(group.dist, tau), 1.0)
    thr = inverse_selection_rate(group.dist, beta).to_policy(group.C)
    du = group_utility(group, thr, u) - group_utility(group, tau, u)
    dd = outcome_change(group, thr, delta) - outcome_change(group, tau, delta)
    if policies_equivalent(group.dist, tau, thr):
        return abs(du) <= tol and abs(dd) <= tol
    return du > tol and dd > tol


def verify_curve_concavity(curve: PiecewiseLinearCurve, tol: float = SIGN_TOL) -> bool:
    return curve.is_concave(tol)


def _increasing_rho(rng, C):
    rho = np.sort(rng.uniform(0.02, 0.98, size=C))
    while np.any(np.diff(rho) <= 1e-6):
        rho = np.sort(rng.uniform(0.02, 0.98, size=C))
    return rho


def random_pmf(rng: np.random.Generator, C: int, zero_prob: float = 0.2) -> np.ndarray:
    """Dirichlet mass with some scores randomly emptied."""
    p = rng.dirichlet(np.ones(C))
    mask = rng.random(C) < zero_prob
    if mask.all():
        mask[rng.integers(C)] = False
    p[mask] = 0.0
    return p / p.sum()


def random_problem(rng: np.random.Generator, C: int | None = None, c_range=(2, 10),
                   zero_prob: float = 0.2, shared_rho: bool = True) -> Problem:
    """Random instance with affine utility and outcome in increasing ``rho``.

    Utility is increasing and has increasing ratio to ``rho``, so every
    solver precondition holds.
    """
    if C is None:
        C = int(rng.integers(c_range[0], c_range[1] + 1))
    rho_a = _increasing_rho(rng, C)
    rho_b = rho_a if shared_rho else _increasing_rho(rng, C)
    g_a = float(rng.uniform(0.05, 0.95))
    ga = GroupSpec(ScoreDistribution(random_pmf(rng, C, zero_prob)), rho_a, g_a, "A")
    gb = GroupSpec(ScoreDistribution(random_pmf(rng, C, zero_prob)), rho_b, 1.0 - g_a, "B")
    u_minus = -float(rng.uniform(0.3, 6.0))
    c_plus, c_minus = float(rng.uniform(0.5, 3.0)), -float(rng.uniform(0.2, 3.0))
    us = tuple(UtilityFn.affine(r, 1.0, u_minus) for r in (rho_a, rho_b))
    ds = tuple(OutcomeFn.affine(r, c_plus, c_minus) for r in (rho_a, rho_b))
    return Problem((ga, gb), us, ds)


def random_policy(rng: np.random.Generator, C: int) -> np.ndarray:
    tau = rng.random(C)
    tau[rng.random(C) < 0.2] = 0.0
    tau[rng.random(C) < 0.2] = 1.0
    return tau
