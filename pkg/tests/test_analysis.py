import warnings

import numpy as np
import pytest
from hypothesis import given, settings

from delayed_impact.analysis import (
    AbsoluteRegime,
    HypothesisError,
    Problem,
    RelativeRegime,
    classify_regime,
    cor_avoid_harm_interval,
    cor_dp_overeager_threshold,
    cor_eqopt_overeager_threshold,
    cor_relative_improvement_intervals,
    eqopt_overeager_threshold_kappa,
    eqopt_underloan_predicate,
    special_betas,
    sweep,
    tpr_dominates,
    verify_underselection,
)
from delayed_impact.core import GroupSpec, MeasurementError, ModelError, ScoreDistribution, quantile
from delayed_impact.fixtures import credit_like_problem, two_point_problem
from delayed_impact.objectives import (
    OutcomeFn,
    UtilityFn,
    check_institution_assumption,
    outcome_curve,
    per_group,
)
from delayed_impact.solvers import solve, solve_demparity, solve_eqopt, solve_maxutil

from conftest import problems

RHO3 = np.array([0.25, 0.5, 0.75])
U3 = UtilityFn([-0.5, 0.0, 0.5])


def pair(pa, pb, g_a=0.5, rho=RHO3):
    return (GroupSpec(ScoreDistribution(pa), rho, g_a, "A"),
            GroupSpec(ScoreDistribution(pb), rho, 1 - g_a, "B"))


def dense_max(curve, n=100001):
    grid = np.linspace(0, 1, n)
    vals = curve(grid)
    return grid, vals


class TestSpecialBetas:
    def test_s1_group_a(self, s1):
        curve = outcome_curve(s1.groups[0], s1.outcome)
        sb = special_betas(curve, 0.2)
        assert sb.beta_star == pytest.approx(0.5)
        assert sb.delta_max == pytest.approx(0.40)
        assert sb.beta_zero == 1.0 and sb.beta_zero_at_boundary
        assert sb.beta_bar == 1.0 and sb.beta_bar_at_boundary
        assert sb.delta_at_maxutil == pytest.approx(0.25)
        grid, vals = dense_max(curve)
        assert grid[np.argmax(vals)] == pytest.approx(sb.beta_star, abs=1e-5)
        assert vals[-1] > sb.delta_at_maxutil

    def test_interior_harm_threshold(self):
        g = GroupSpec(ScoreDistribution([0.2] * 5), np.linspace(0.1, 0.9, 5), 1.0)
        curve = outcome_curve(g, OutcomeFn([-1.5, -1.5, 0.5, 0.5, 0.5]))
        sb = special_betas(curve, 0.6)
        assert sb.beta_zero == pytest.approx(0.8, abs=1e-12)
        assert not sb.beta_zero_at_boundary
        assert curve(sb.beta_zero) == pytest.approx(0.0, abs=1e-12)

    def test_maxutil_at_peak(self, s1):
        curve = outcome_curve(s1.groups[0], s1.outcome)
        sb = special_betas(curve, 0.5)
        assert sb.beta_bar == 0.5

    @settings(max_examples=200, deadline=None)
    @given(problems())
    def test_ordering_under_assumption(self, prob):
        us, ds = per_group(prob.utility), per_group(prob.outcome)
        if not all(check_institution_assumption(u, d) for u, d in zip(us, ds)):
            return
        mu = solve_maxutil(prob.groups, prob.utility)
        for g, d, dec in zip(prob.groups, ds, mu.groups):
            curve = outcome_curve(g, d)
            sb = special_betas(curve, dec.beta)
            assert sb.beta_maxutil <= sb.beta_star + 1e-12
            assert sb.beta_star <= sb.beta_bar + 1e-12
            assert sb.beta_bar <= sb.beta_zero + 1e-12
            if not sb.beta_zero_at_boundary:
                assert curve(sb.beta_zero) == pytest.approx(0.0, abs=1e-10)
            if not sb.beta_bar_at_boundary:
                assert curve(sb.beta_bar) == pytest.approx(sb.delta_at_maxutil, abs=1e-10)
            reg = classify_regime(dec.beta, sb, curve)
            assert reg.absolute is not AbsoluteRegime.ACTIVE_HARM


class TestRegimes:
    def setup_method(self):
        g = GroupSpec(ScoreDistribution([0.2] * 5), np.linspace(0.1, 0.9, 5), 1.0)
        self.curve = outcome_curve(g, OutcomeFn([-1.5, -1.5, 0.5, 0.5, 0.5]))
        self.sb = special_betas(self.curve, 0.2)

    def test_active_harm(self):
        assert classify_regime(0.9, self.sb, self.curve).absolute is AbsoluteRegime.ACTIVE_HARM

    def test_stagnation(self):
        r = classify_regime(0.0, self.sb, self.curve)
        assert r.absolute is AbsoluteRegime.STAGNATION
        assert r.relative is RelativeRegime.RELATIVE_HARM

    def test_self_comparison(self):
        r = classify_regime(0.2, self.sb, self.curve)
        assert r.relative is RelativeRegime.RELATIVE_NEUTRAL
        assert r.absolute is AbsoluteRegime.IMPROVEMENT

    def test_relative_improvement(self):
        r = classify_regime(0.5, self.sb, self.curve)
        assert r.relative is RelativeRegime.RELATIVE_IMPROVEMENT
        assert str(r) == "improvement/relative_improvement"


def overeager_instance(g_a=0.5):
    # at rate 0.5 group A admits score 1 and group B admits score 3
    return pair([0.6, 0.2, 0.2], [0.1, 0.2, 0.7], g_a)


class TestParityThreshold:
    def test_formula_example(self):
        iv = cor_dp_overeager_threshold(overeager_instance(), U3, 0.5)
        assert (iv.lower, iv.upper) == (0.0, pytest.approx(0.5))

    def test_sweep_agrees(self):
        iv = cor_dp_overeager_threshold(overeager_instance(), U3, 0.5)
        for g in np.arange(0.001, 1.0, 0.001):
            beta = solve_demparity(overeager_instance(g), U3).beta[0]
            if g < iv.upper - 1e-9:
                assert beta > 0.5

    def test_hypothesis_violation(self):
        with pytest.raises(HypothesisError) as exc:
            cor_dp_overeager_threshold(overeager_instance(), U3, 0.1)
        assert exc.value.failures

    def test_flags(self):
        groups = overeager_instance()
        d = OutcomeFn([-2.0, 0.5, 1.0])
        curve = outcome_curve(groups[0], d)
        sb = special_betas(curve, solve_maxutil(groups, U3).beta[0])
        assert sb.beta_bar == pytest.approx(0.45) and sb.beta_zero == pytest.approx(0.55)
        iv = cor_dp_overeager_threshold(groups, U3, sb.beta_zero, sb)
        assert "active_harm_boundary" in iv.flags
        iv = cor_dp_overeager_threshold(groups, U3, sb.beta_bar, sb)
        assert "relative_harm_boundary" in iv.flags


class TestEqOptThreshold:
    def test_identical_groups(self):
        with pytest.raises(HypothesisError):
            cor_eqopt_overeager_threshold(pair([0.6, 0.2, 0.2], [0.6, 0.2, 0.2]), U3, 0.5)

    @pytest.mark.parametrize("beta", [0.45, 0.5, 0.55])
    def test_interior_threshold_and_sweep(self, beta):
        groups = overeager_instance()
        iv = cor_eqopt_overeager_threshold(groups, U3, beta)
        assert 0 < iv.upper < 1
        assert iv.upper == pytest.approx(eqopt_overeager_threshold_kappa(groups, U3, beta), abs=1e-12)
        for g in np.arange(0.001, 1.0, 0.001):
            rate = solve_eqopt(overeager_instance(g), U3).beta[0]
            if g < iv.upper - 1e-9:
                assert rate > beta

    def test_translated_instance(self):
        rho = np.linspace(0.1, 0.9, 6)
        u = UtilityFn.affine(rho, 1.0, -1.0)
        pa, pb = [0.3, 0.4, 0.3, 0, 0, 0], [0, 0, 0.3, 0.4, 0.3, 0]
        for beta in (0.3, 0.5):
            iv = cor_eqopt_overeager_threshold(pair(pa, pb, rho=rho), u, beta)
            assert 0 < iv.upper < 1
            for g in np.linspace(0.01, iv.upper - 1e-6, 40):
                assert solve_eqopt(pair(pa, pb, g, rho), u).beta[0] > beta


class TestRelativeImprovement:
    @pytest.mark.parametrize("beta,beta_prime", [(0.45, 0.85), (0.5, 0.9), (0.5, 0.75)])
    def test_intervals_against_sweeps(self, beta, beta_prime):
        groups = overeager_instance()
        dp, eo = cor_relative_improvement_intervals(groups, U3, beta, beta_prime)
        for iv, crit in ((dp, "demparity"), (eo, "eqopt")):
            assert 0 <= iv.lower < iv.upper <= 1
            for g in np.arange(0.001, 1.0, 0.001):
                if iv.lower + 1e-9 < g < iv.upper - 1e-9:
                    rate = solve(crit, overeager_instance(g), U3).beta[0]
                    assert beta < rate < beta_prime

    def test_hypotheses_reported(self):
        with pytest.raises(HypothesisError) as exc:
            cor_relative_improvement_intervals(overeager_instance(), U3, 0.8, 0.5)
        assert len(exc.value.failures) >= 1


class TestAvoidHarm:
    def test_credit_like_fixture(self):
        prob = credit_like_problem()
        curve = outcome_curve(prob.groups[0], prob.outcome)
        mu = solve_maxutil(prob.groups, prob.utility)
        sb = special_betas(curve, mu.beta[0])
        rep = cor_avoid_harm_interval(prob.groups, prob.utility, sb.beta_zero, sb)
        assert rep.shift == 14
        assert rep.g_exceeds_beta
        # the quantile of group A lands exactly on its mean, so the ratios tie
        a, b = prob.groups
        qa = quantile(a.dist, sb.beta_zero)
        assert qa == a.dist.mean() == 35
        assert b.dist.mean() / a.dist.mean() == quantile(b.dist, sb.beta_zero) / qa
        assert not rep.mean_ratio_below_quantile_ratio
        iv = rep.interval
        assert iv.contains(0.18)
        for g in np.linspace(iv.lower + 1e-4, iv.upper - 1e-4, 25):
            p = prob.with_share(g)
            assert solve_eqopt(p.groups, p.utility).beta[0] < sb.beta_zero
            assert solve_demparity(p.groups, p.utility).beta[0] > sb.beta_zero

    def test_requires_translation(self, s1):
        with pytest.raises(HypothesisError):
            cor_avoid_harm_interval(s1.groups, s1.utility, 0.6)


class TestUnderloan:
    def test_two_point(self, d5):
        rep = eqopt_underloan_predicate(d5.groups, d5.utility)
        assert rep.predicate
        assert rep.tpr_maxutil[0] == pytest.approx(4 / 4.2, abs=1e-9)
        assert rep.tpr_maxutil[1] == pytest.approx(4.5 / 4.8, abs=1e-9)
        assert rep.chain and rep.chain_forced
        assert rep.beta_eqopt < 0.8 < rep.beta_demparity

    def test_identical_groups(self, s1):
        a = s1.groups[0]
        rep = eqopt_underloan_predicate((a, GroupSpec(a.dist, a.rho, 0.5)), s1.utility)
        assert not rep.predicate

    def test_outside_range(self):
        p = two_point_problem(eps=0.3)
        assert not eqopt_underloan_predicate(p.groups, p.utility).predicate

    @pytest.mark.parametrize("g_a", [0.5, 0.9])
    def test_chain_not_forced_for_large_shares(self, g_a):
        p = two_point_problem(g_a=g_a)
        rep = eqopt_underloan_predicate(p.groups, p.utility)
        assert rep.predicate
        assert not rep.chain and not rep.chain_forced


class TestUnderselection:
    def test_identity_error(self, s1):
        rep = verify_underselection(s1.groups, s1.utility, MeasurementError([0, 0, 0]))
        assert rep.true_rates == rep.est_rates and rep.ok

    def test_shift_below_threshold_keeps_maxutil(self):
        groups = pair([0.3, 0.3, 0.4], [0.2, 0.3, 0.5])
        rep = verify_underselection(groups, U3, MeasurementError([0, -1, 0]))
        assert rep.est_rates["maxutil"] == rep.true_rates["maxutil"]
        assert rep.ok

    def test_crossing_shift_is_strict(self):
        # group A dominates the objective, so losing its top score pulls both rates down
        groups = pair([0.3, 0.3, 0.4], [0.2, 0.3, 0.5], g_a=0.9)
        u = UtilityFn([-0.5, -0.1, 0.5])
        rep = verify_underselection(groups, u, MeasurementError([0, 0, -1]))
        assert rep.est_rates["maxutil"] < rep.true_rates["maxutil"]
        assert rep.est_rates["demparity"] < rep.true_rates["demparity"]

    def test_eqopt_can_rise_despite_tpr_domination(self, d5):
        err = MeasurementError.constant(-1, 6)
        rep = verify_underselection(d5.groups, d5.utility, err)
        assert rep.tpr_dominated
        assert rep.checks["maxutil"] and rep.checks["demparity"]
        assert rep.est_rates["eqopt"] == pytest.approx(0.796875, abs=1e-12)
        assert rep.true_rates["eqopt"] == pytest.approx(0.7875, abs=1e-12)
        assert not rep.checks["eqopt"]

    def test_tpr_domination(self, s1):
        a = s1.groups[0]
        assert tpr_dominates(a, a.dist)
        assert not tpr_dominates(a, ScoreDistribution([0.0, 0.0, 1.0]))


class TestSweep:
    def test_single_point_reproduces_solvers(self, s1):
        rows = sweep(s1, "g_A", [0.5], ["maxutil", "demparity", "eqopt"])
        for row in rows:
            r = solve(row["criterion"], s1.groups, s1.utility, s1.outcome)
            assert row["beta_A"] == r.beta[0] and row["utility"] == r.utility

    def test_share_grid(self, s1):
        grid = np.linspace(0.1, 0.9, 9)
        rows = sweep(s1, "g_A", grid, ["demparity"])
        assert len(rows) == 9
        assert [r["value"] for r in rows] == list(grid)

    def test_lambda_grid(self, s1):
        rows = sweep(s1, "lambda", [0.0, 0.1, 1.0, 10.0], ["soft_demparity"])
        gaps = [abs(r["gap"]) for r in rows]
        assert gaps[-1] == 0.0 and gaps == sorted(gaps, reverse=True)

    def test_ratio_grid(self):
        rows = sweep(credit_like_problem(), "u_ratio", [-4.0, -10.0], ["maxutil"])
        assert rows[0]["beta_A"] >= rows[1]["beta_A"]

    def test_errors(self, s1):
        with pytest.raises(ModelError):
            sweep(s1, "nope", [1.0], ["maxutil"])
        with pytest.raises(ModelError):
            sweep(s1, "lambda", [1.0], ["maxutil"])
        with pytest.raises(ModelError):
            sweep(s1, "g_A", [0.5], ["soft_demparity"])
        with pytest.raises(ModelError):
            sweep(s1, "g_A", [], ["maxutil"])


def test_problem_helpers(s1):
    p = s1.with_share(0.3)
    assert p.groups[0].proportion == 0.3 and p.groups[1].proportion == pytest.approx(0.7)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert len(p.outcome_curves()) == 2
    assert isinstance(s1, Problem)
