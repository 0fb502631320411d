import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from delayed_impact.core import (
    GroupSpec,
    ModelError,
    ScoreDistribution,
    inverse_selection_rate,
    quantile,
    quantile_plus,
)
from delayed_impact.objectives import (
    ConcavityWarning,
    ConstraintWeights,
    OutcomeFn,
    UtilityFn,
    group_utility,
    outcome_change,
    outcome_curve,
    threshold_curve,
    total_utility,
    tpr,
    transfer_G,
    transfer_T,
    transfer_T_inverse,
    utility_curve,
)

from conftest import groups_strategy, pmfs

PI = ScoreDistribution([0.5, 0.3, 0.2])
RHO = np.array([0.25, 0.5, 0.75])


def group(pmf=PI, rho=RHO, g=0.5):
    return GroupSpec(pmf if isinstance(pmf, ScoreDistribution) else ScoreDistribution(pmf), rho, g)


def threshold_tau(dist, beta):
    return inverse_selection_rate(dist, beta).to_policy(dist.C)


class TestFunctionals:
    def test_group_utility(self):
        u = UtilityFn([-0.5, 0.0, 0.5])
        assert group_utility(group(), [0, 0, 1], u) == pytest.approx(0.10)
        assert group_utility(group(), [0, 0, 0], u) == 0.0
        assert group_utility(group(), [1, 1, 1], u) == pytest.approx(-0.15)

    def test_total_utility(self):
        u = UtilityFn([-0.5, 0.0, 0.5])
        top = [0, 0, 1]
        a, b = group(g=0.5), group([0.2, 0.2, 0.6], g=0.5)
        assert group_utility(b, top, u) == pytest.approx(0.30)
        assert total_utility((a, b), (top, top), u) == pytest.approx(0.20)
        a, b = group(g=1.0), group([0.2, 0.2, 0.6], g=0.0)
        assert total_utility((a, b), (top, top), u) == group_utility(a, top, u)
        u2 = UtilityFn([0.0, 0.0, 5.0])
        a, b = group(g=0.18), group(g=0.82)
        assert total_utility((a, b), ([1, 1, 0], top), u2) == pytest.approx(0.82)

    def test_outcome_change(self):
        d = OutcomeFn.affine(RHO, 2.0, -1.0)
        np.testing.assert_allclose(d.values, [-0.25, 0.5, 1.25])
        assert outcome_change(group(), [0, 1, 1], d) == pytest.approx(0.40)
        assert outcome_change(group(), [0.3, 0.2, 1], OutcomeFn(np.zeros(3))) == 0.0

    def test_outcome_with_rejection_effect(self):
        d = OutcomeFn([-0.25, 0.5, 1.25])
        dn = OutcomeFn([-0.25, 0.5, 1.25], -0.1 * np.ones(3))
        assert outcome_change(group(), [1, 1, 1], dn) == outcome_change(group(), [1, 1, 1], d)
        assert outcome_change(group(), [0, 0, 0], dn) == pytest.approx(-0.1)

    def test_tpr(self, d5):
        a, b = d5.groups
        assert tpr(a, np.ones(6)) == 1.0
        sel5 = np.array([0, 0, 0, 0, 1, 0.0])
        assert tpr(a, sel5) == pytest.approx(4 / 4.2, abs=1e-12)
        assert tpr(b, sel5) == pytest.approx(4.5 / 4.8, abs=1e-12)

    def test_tpr_needs_success_mass(self):
        with pytest.raises(ModelError):
            tpr(group(rho=np.zeros(3)), [1, 1, 1])

    def test_affine_clamp(self):
        labels = np.array([300.0, 310.0, 320.0])
        d = OutcomeFn.affine([0.5, 0.5, 0.5], 75.0, -150.0, clamp=True, labels=labels)
        # gain limited by room above, loss by room below
        np.testing.assert_allclose(d.values, [0.5 * 20, 0.5 * 10 - 0.5 * 10, -0.5 * 20])


class TestCurves:
    def test_s1_outcome_curve(self, s1):
        c = outcome_curve(s1.groups[0], s1.outcome)
        np.testing.assert_allclose(c.breakpoints, [0, 0.2, 0.5, 1.0], atol=1e-15)
        np.testing.assert_allclose(c.values, [0, 0.25, 0.40, 0.275], atol=1e-15)
        # dense-grid oracle
        grid = np.linspace(0, 1, 2001)
        direct = [outcome_change(s1.groups[0], threshold_tau(PI, b), s1.outcome) for b in grid]
        np.testing.assert_allclose(c(grid), direct, atol=1e-12)
        assert c.argmax_interval() == (0.5, 0.5)

    def test_identity_curve(self):
        c = outcome_curve(group(), OutcomeFn(np.ones(3)))
        grid = np.linspace(0, 1, 11)
        np.testing.assert_allclose(c(grid), grid, atol=1e-15)

    def test_symmetric_maximum(self):
        c = outcome_curve(group([0.25] * 4, np.linspace(0.2, 0.8, 4)), OutcomeFn([-1, -1, 1, 1]))
        assert c.argmax_interval()[0] == pytest.approx(0.5)
        assert c(0.5) == pytest.approx(0.5)

    def test_nonmonotone_weight_warns(self):
        with pytest.warns(ConcavityWarning):
            c = outcome_curve(group(), OutcomeFn([1.0, 0.0, -1.0]))
        assert not c.is_concave()

    def test_zero_mass_scores_merge(self):
        c = utility_curve(group([0.5, 0.0, 0.5]), UtilityFn([-1.0, 0.0, 1.0]))
        np.testing.assert_allclose(c.breakpoints, [0, 0.5, 1.0])
        np.testing.assert_array_equal(c.scores, [3, 1])

    @settings(max_examples=300)
    @given(pmfs(8), st.lists(st.floats(-3, 3), min_size=8, max_size=8), st.floats(0, 1))
    def test_exact_against_direct_evaluation(self, p, raw, beta):
        dist = ScoreDistribution(p)
        weight = np.sort(raw)
        c = threshold_curve(dist, weight)
        direct = float(np.dot(dist.pmf * weight, threshold_tau(dist, beta)))
        assert abs(c(beta) - direct) <= 1e-12

    @settings(max_examples=300)
    @given(pmfs(8), st.lists(st.floats(-3, 3), min_size=8, max_size=8))
    def test_concavity_and_one_sided_slopes(self, p, raw):
        dist = ScoreDistribution(p)
        weight = np.sort(raw)
        c = threshold_curve(dist, weight)
        assert np.all(np.diff(c.slopes) <= 1e-12)
        inner = c.breakpoints[1:-1]
        for b in c.breakpoints[:-1]:
            assert c.right_derivative(b) == weight[quantile(dist, b) - 1]
        for b in c.breakpoints[1:]:
            assert c.left_derivative(b) == weight[quantile_plus(dist, b) - 1]
        for b in inner:
            assert c.left_derivative(b) >= c.right_derivative(b) - 1e-12


class TestTransfer:
    def test_boundaries(self, s1):
        a = s1.groups[0]
        w = ConstraintWeights.equal_opportunity(s1.groups)
        assert transfer_T(a, w.w_a, 0.0) == 0.0
        assert transfer_T(a, w.w_a, 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_s1_values(self, s1):
        a, b = s1.groups
        w = ConstraintWeights.equal_opportunity(s1.groups)
        t = transfer_T(a, w.w_a, 0.2)
        assert t == pytest.approx(0.2 * 0.75 / 0.425, abs=1e-12)
        assert t == pytest.approx(tpr(a, threshold_tau(a.dist, 0.2)), abs=1e-12)
        g = transfer_G(a, b, w, 0.2)
        # oracle: bisection on the group-B TPR of threshold policies
        ref = brentq(lambda x: tpr(b, threshold_tau(b.dist, x)) - t, 0, 1, xtol=1e-15)
        assert g == pytest.approx(ref, abs=1e-12)
        assert g == pytest.approx(0.27058823529411763, abs=1e-12)

    def test_identical_groups_identity(self):
        a, b = group(), group()
        w = ConstraintWeights.equal_opportunity((a, b))
        for beta in np.linspace(0, 1, 11):
            assert transfer_G(a, b, w, beta) == pytest.approx(beta, abs=1e-12)

    def test_translated_groups_move_up(self):
        rho = np.linspace(0.1, 0.9, 6)
        a = group([0.3, 0.4, 0.3, 0, 0, 0], rho)
        b = group([0, 0, 0.3, 0.4, 0.3, 0], rho)
        w = ConstraintWeights.equal_opportunity((a, b))
        for beta in np.linspace(0.05, 0.95, 19):
            assert transfer_G(a, b, w, beta) > beta

    def test_range_errors(self):
        a, b = group(g=0.5), group([0.2, 0.3, 0.5], g=0.5)
        w = ConstraintWeights(np.ones(3) * 2.0, np.ones(3))
        with pytest.raises(ModelError):
            transfer_G(a, b, w, 0.9)
        with pytest.raises(ModelError):
            transfer_T_inverse(a, np.ones(3), 1.5)

    @settings(max_examples=100)
    @given(groups_strategy(), st.lists(st.floats(0, 1), min_size=5, max_size=5))
    def test_round_trip_and_equal_tpr(self, groups, betas):
        a, b = groups
        if np.dot(a.pmf, a.rho) <= 0 or np.dot(b.pmf, b.rho) <= 0:
            return
        w = ConstraintWeights.equal_opportunity(groups)
        prev = -1.0
        for beta in sorted(betas):
            t = transfer_T(a, w.w_a, beta)
            assert transfer_T_inverse(a, w.w_a, t) == pytest.approx(beta, abs=1e-12)
            g = transfer_G(a, b, w, beta)
            assert g >= prev - 1e-12
            prev = g
            assert tpr(a, threshold_tau(a.dist, beta)) == pytest.approx(
                tpr(b, threshold_tau(b.dist, g)), abs=1e-12)

    def test_weights_must_be_positive(self):
        with pytest.raises(ModelError):
            ConstraintWeights(np.array([0.0, 1, 1]), np.ones(3))


def test_tpr_monotone_in_rate(s1):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a = s1.groups[0]
        vals = [tpr(a, threshold_tau(a.dist, b)) for b in np.linspace(0, 1, 101)]
    assert np.all(np.diff(vals) >= -1e-15)
    assert vals[-1] == pytest.approx(1.0)
