import numpy as np
import pytest
from hypothesis import strategies as st
from scipy.optimize import linprog

from delayed_impact import GroupSpec, OutcomeFn, ScoreDistribution, UtilityFn
from delayed_impact.analysis import Problem
from delayed_impact.fixtures import three_score_problem, two_point_problem
from delayed_impact.objectives import per_group


HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def lp_optimum(groups, u, w=None):
    """Optimal utility by linear programming over all (not just threshold) policies.

    ``w`` is a pair of constraint weights, or None for no constraint.
    """
    a, b = groups
    ua, ub = (f.values for f in per_group(u))
    C = a.C
    c = -np.concatenate([a.proportion * a.pmf * ua, b.proportion * b.pmf * ub])
    kw = {}
    if w is not None:
        kw = dict(A_eq=np.concatenate([a.pmf * w[0], -b.pmf * w[1]])[None, :], b_eq=[0.0])
    res = linprog(c, bounds=[(0, 1)] * (2 * C), method="highs", options=HIGHS, **kw)
    assert res.success
    return -res.fun, res.x[:C], res.x[C:]


def lp_soft_abs(groups, u, w, lam):
    """Optimal value of utility minus ``lam * |t_A - t_B|`` by linear programming."""
    a, b = groups
    ua, ub = (f.values for f in per_group(u))
    C = a.C
    c = np.concatenate([-a.proportion * a.pmf * ua, -b.proportion * b.pmf * ub, [lam]])
    row = np.concatenate([a.pmf * w[0], -b.pmf * w[1]])
    A_ub = np.vstack([np.append(row, -1.0), np.append(-row, -1.0)])
    res = linprog(c, A_ub=A_ub, b_ub=[0.0, 0.0],
                  bounds=[(0, 1)] * (2 * C) + [(0, None)], method="highs", options=HIGHS)
    assert res.success
    return -res.fun


@st.composite
def pmfs(draw, C, allow_zero=True):
    raw = draw(st.lists(st.floats(0.0, 1.0) if allow_zero else st.floats(0.01, 1.0),
                        min_size=C, max_size=C))
    raw = np.array(raw)
    # tiny positive masses sit below the linear-programming tolerances
    raw[raw < 1e-3] = 0.0
    if raw.sum() < 1e-3:
        raw[draw(st.integers(0, C - 1))] = 1.0
    return raw / raw.sum()


@st.composite
def groups_strategy(draw, min_C=2, max_C=8):
    C = draw(st.integers(min_C, max_C))
    incs = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=C, max_size=C)))
    rho = 0.02 + 0.96 * np.cumsum(incs) / incs.sum()
    rho = np.minimum(rho, 0.98)
    g_a = draw(st.floats(0.05, 0.95))
    a = GroupSpec(ScoreDistribution(draw(pmfs(C))), rho, g_a, "A")
    b = GroupSpec(ScoreDistribution(draw(pmfs(C))), rho, 1.0 - g_a, "B")
    return a, b


@st.composite
def problems(draw, min_C=2, max_C=8):
    a, b = draw(groups_strategy(min_C, max_C))
    u_minus = -draw(st.floats(0.3, 6.0))
    c_plus, c_minus = draw(st.floats(0.5, 3.0)), -draw(st.floats(0.2, 3.0))
    return Problem((a, b), UtilityFn.affine(a.rho, 1.0, u_minus),
                   OutcomeFn.affine(a.rho, c_plus, c_minus))


@pytest.fixture
def s1():
    return three_score_problem()


@pytest.fixture
def d5():
    return two_point_problem()
