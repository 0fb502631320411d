"""Small reference instances used by the tests, the CLI examples and the docs."""
from __future__ import annotations

import numpy as np

from .analysis import Problem
from .core import GroupSpec, ScoreDistribution
from .objectives import OutcomeFn, UtilityFn


def three_score_problem(g_a: float = 0.5) -> Problem:
    """Three scores; group B is group A reflected.  Repayment 1/4, 1/2, 3/4."""
    rho = np.array([0.25, 0.5, 0.75])
    a = GroupSpec(ScoreDistribution([0.5, 0.3, 0.2]), rho, g_a, "A")
    b = GroupSpec(ScoreDistribution([0.2, 0.3, 0.5]), rho, 1.0 - g_a, "B")
    return Problem((a, b), UtilityFn.affine(rho, 1.0, -1.0), OutcomeFn.affine(rho, 2.0, -1.0))


def two_point_problem(eps: float = 0.1, g_a: float = 0.18) -> Problem:
    """Six scores with repayment ``x / 6`` and utility ``(x - 4) / 2``.

    Group A sits at scores 1 and 5, group B at 3 and 5; ``eps`` controls
    how much mass is off the top score.
    """
    x = np.arange(1, 7)
    rho = x / 6.0
    pa, pb = np.zeros(6), np.zeros(6)
    pa[4], pa[0] = 1.0 - 2 * eps, 2 * eps
    pb[4], pb[2] = 1.0 - eps, eps
    a = GroupSpec(ScoreDistribution(pa), rho, g_a, "A")
    b = GroupSpec(ScoreDistribution(pb), rho, 1.0 - g_a, "B")
    u = UtilityFn((x - 4) / 2.0)
    return Problem((a, b), u, OutcomeFn.affine(rho, 1.0, -1.0))


CREDIT_LABELS = np.arange(300, 851, 10)
CREDIT_SHIFT = 14


def credit_like_groups(g_a: float = 0.18) -> tuple[GroupSpec, GroupSpec]:
    """Synthetic credit-score groups on labels 300..850 (step 10).

    Both groups share a truncated discretized normal shape (sd of 5 grid
    steps, half-width 7) centred at labels 640 and 780, so group B is
    group A moved up by 14 steps.  Repayment rises linearly from 0.05 to
    0.97 and is the same for both groups.
    """
    C = CREDIT_LABELS.size
    rho = np.linspace(0.05, 0.97, C)
    k = np.arange(-7, 8)
    shape = np.exp(-0.5 * (k / 5.0) ** 2)
    shape /= shape.sum()
    pa, pb = np.zeros(C), np.zeros(C)
    pa[35 - 1 + k] = shape
    pb[35 + CREDIT_SHIFT - 1 + k] = shape
    a = GroupSpec(ScoreDistribution(pa), rho, g_a, "A")
    b = GroupSpec(ScoreDistribution(pb), rho, 1.0 - g_a, "B")
    return a, b


def credit_like_problem(u_ratio: float = -4.0, g_a: float = 0.18) -> Problem:
    """Credit-like groups with loss/gain ratio ``u_ratio`` and score change
    +75 on repayment, -150 on default."""
    a, b = credit_like_groups(g_a)
    u = UtilityFn.affine(a.rho, 1.0, u_ratio)
    return Problem((a, b), u, OutcomeFn.affine(a.rho, 75.0, -150.0))
