"""Outcome regimes, proportion thresholds and measurement-error diagnostics."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import (
    GroupSpec,
    MeasurementError,
    ModelError,
    ScoreDistribution,
    apply_measurement_error,
    check_group_pair,
    cdf_dominates,
    quantile,
    quantile_plus,
)
from .objectives import (
    SIGN_TOL,
    ConstraintWeights,
    PiecewiseLinearCurve,
    outcome_curve,
    per_group,
    transfer_G,
)
from .solvers import (
    SoftPenalty,
    solve,
    solve_demparity,
    solve_eqopt,
    solve_maxutil,
    solve_soft,
)

REGIME_TOL = 1e-10


class HypothesisError(ValueError):
    """The inputs do not satisfy the hypotheses of a threshold result.

    ``failures`` lists each violated hypothesis.
    """

    def __init__(self, failures: Sequence[str]):
        self.failures = list(failures)
        super().__init__("; ".join(self.failures))


class AbsoluteRegime(enum.Enum):
    ACTIVE_HARM = "active_harm"
    STAGNATION = "stagnation"
    IMPROVEMENT = "improvement"


class RelativeRegime(enum.Enum):
    RELATIVE_HARM = "relative_harm"
    RELATIVE_IMPROVEMENT = "relative_improvement"
    RELATIVE_NEUTRAL = "relative_neutral"


@dataclass(frozen=True)
class OutcomeRegime:
    absolute: AbsoluteRegime
    relative: RelativeRegime

    def __str__(self):
        return f"{self.absolute.value}/{self.relative.value}"


@dataclass(frozen=True)
class SpecialBetas:
    """Landmark selection rates on a group's outcome curve.

    ``beta_star`` is the leftmost outcome-maximizing rate, ``beta_zero``
    the largest rate without harm and ``beta_bar`` the largest rate doing
    at least as well as ``beta_maxutil``.  The ``*_at_boundary`` flags mark
    values clipped to 1 because the crossing lies beyond the domain.
    """

    beta_maxutil: float
    beta_star: float
    beta_zero: float
    beta_bar: float
    beta_zero_at_boundary: bool
    beta_bar_at_boundary: bool
    delta_at_maxutil: float
    delta_max: float


def special_betas(curve: PiecewiseLinearCurve, beta_maxutil: float) -> SpecialBetas:
    """Locate the landmark rates by walking the curve's segments."""
    star = curve.argmax_interval()[0]
    dmax = curve(star)
    d_mu = curve(beta_maxutil)
    zero, zero_flag = curve.superlevel_right_end(0.0, star, tol=0.0)
    if dmax < 0.0:
        zero, zero_flag = 0.0, False
    if d_mu >= dmax - SIGN_TOL:
        bar, bar_flag = beta_maxutil, False
    else:
        bar, bar_flag = curve.superlevel_right_end(d_mu, star, tol=0.0)
    return SpecialBetas(float(beta_maxutil), star, zero, bar, zero_flag, bar_flag,
                        float(d_mu), float(dmax))


def classify_regime(beta: float, betas: SpecialBetas,
                    curve: PiecewiseLinearCurve) -> OutcomeRegime:
    """Absolute and relative outcome regime of selecting at rate ``beta``."""
    d = curve(beta)
    if d < -REGIME_TOL:
        absolute = AbsoluteRegime.ACTIVE_HARM
    elif d > REGIME_TOL:
        absolute = AbsoluteRegime.IMPROVEMENT
    else:
        absolute = AbsoluteRegime.STAGNATION
    ref = betas.delta_at_maxutil
    if d < ref - REGIME_TOL:
        relative = RelativeRegime.RELATIVE_HARM
    elif d > ref + REGIME_TOL:
        relative = RelativeRegime.RELATIVE_IMPROVEMENT
    else:
        relative = RelativeRegime.RELATIVE_NEUTRAL
    return OutcomeRegime(absolute, relative)


@dataclass(frozen=True)
class ProportionInterval:
    """Range ``[lower, upper]`` of group-A shares for which a conclusion holds."""

    lower: float
    upper: float
    conclusion: str
    beta_target: float
    beta_prime: float | None = None
    flags: tuple[str, ...] = ()

    def contains(self, g: float) -> bool:
        return self.lower <= g <= self.upper


def _threshold(a: float, b: float) -> float:
    """Share ``g`` at which ``g * a + (1 - g) * b`` changes sign (``a < 0 < b``)."""
    return 1.0 / (1.0 - a / b)


class _Pair:
    """Per-group quantities shared by the threshold results."""

    def __init__(self, groups, u):
        self.a, self.b = check_group_pair(groups)
        self.ua, self.ub = (f.values for f in per_group(u))
        self.u = u
        self.mu = solve_maxutil((self.a, self.b), u)

    def eqopt(self):
        w = ConstraintWeights.equal_opportunity((self.a, self.b))
        return w, self.ua / w.w_a, self.ub / w.w_b


def _flags(beta: float, betas: SpecialBetas | None) -> tuple[str, ...]:
    if betas is None:
        return ()
    out = []
    if abs(beta - betas.beta_zero) <= REGIME_TOL and not betas.beta_zero_at_boundary:
        out.append("active_harm_boundary")
    if abs(beta - betas.beta_bar) <= REGIME_TOL and not betas.beta_bar_at_boundary:
        out.append("relative_harm_boundary")
    return tuple(out)


def cor_dp_overeager_threshold(groups, u, beta_target: float,
                               betas: SpecialBetas | None = None) -> ProportionInterval:
    """Shares of group A for which parity selects A above ``beta_target``."""
    p = _Pair(groups, u)
    ba, bb = p.mu.beta
    fails = []
    if not beta_target > ba:
        fails.append("beta_target must exceed group A's utility-maximizing rate")
    if not bb > beta_target:
        fails.append("group B's utility-maximizing rate must exceed beta_target")
    if fails:
        raise HypothesisError(fails)
    a = p.ua[quantile(p.a.dist, beta_target) - 1]
    b = p.ub[quantile(p.b.dist, beta_target) - 1]
    if not (a <= 0 < b):
        raise HypothesisError([f"need u_A(Q_A) <= 0 < u_B(Q_B), got {a!r}, {b!r}"])
    return ProportionInterval(0.0, _threshold(a, b), "demparity_rate_above",
                              beta_target, flags=_flags(beta_target, betas))


def cor_eqopt_overeager_threshold(groups, u, beta_target: float,
                                  betas: SpecialBetas | None = None) -> ProportionInterval:
    """Shares of group A for which equal opportunity selects A above ``beta_target``."""
    p = _Pair(groups, u)
    w, ra, rb = p.eqopt()
    ba, bb = p.mu.beta
    gb = transfer_G(p.a, p.b, w, beta_target)
    fails = []
    if not beta_target > ba:
        fails.append("beta_target must exceed group A's utility-maximizing rate")
    if not bb > gb:
        fails.append("group B's utility-maximizing rate must exceed G(beta_target)")
    if fails:
        raise HypothesisError(fails)
    a = ra[quantile(p.a.dist, beta_target) - 1]
    b = rb[quantile(p.b.dist, gb) - 1]
    if not (a <= 0 < b):
        raise HypothesisError([f"need u/w at Q_A <= 0 < u/w at Q_B(G), got {a!r}, {b!r}"])
    return ProportionInterval(0.0, _threshold(a, b), "eqopt_rate_above",
                              beta_target, flags=_flags(beta_target, betas))


def eqopt_overeager_threshold_kappa(groups, u, beta_target: float) -> float:
    """Same threshold as ``cor_eqopt_overeager_threshold``, written with
    repayment probabilities and the ratio of repaying masses."""
    a, b = check_group_pair(groups)
    ua, ub = (f.values for f in per_group(u))
    gb = transfer_G(a, b, ConstraintWeights.equal_opportunity((a, b)), beta_target)
    qa, qb = quantile(a.dist, beta_target) - 1, quantile(b.dist, gb) - 1
    kappa = np.dot(b.rho, b.pmf) / np.dot(a.rho, a.pmf)
    return 1.0 / (1.0 - (1.0 / kappa) * (b.rho[qb] / ub[qb]) * (ua[qa] / a.rho[qa]))


def _upper_share(a: float, b: float) -> float:
    """Shares above which ``g * a + (1 - g) * b < 0`` (``a < 0``)."""
    return 0.0 if b <= 0 else _threshold(a, b)


def cor_relative_improvement_intervals(groups, u, beta_target: float, beta_prime: float,
                                       betas: SpecialBetas | None = None
                                       ) -> tuple[ProportionInterval, ProportionInterval]:
    """Shares of group A for which parity and equal opportunity select A
    at a rate strictly between ``beta_target`` and ``beta_prime``."""
    p = _Pair(groups, u)
    w, ra, rb = p.eqopt()
    ba, bb = p.mu.beta
    fails = []
    if not ba < beta_target < beta_prime <= 1.0:
        fails.append("need beta_A(maxutil) < beta_target < beta_prime <= 1")
    if betas is not None and beta_prime > betas.beta_bar + REGIME_TOL:
        fails.append("beta_prime exceeds the relative-harm threshold")
    if not beta_target < bb:
        fails.append("beta_target must be below group B's utility-maximizing rate")
    if fails:
        raise HypothesisError(fails)
    ga, gb = transfer_G(p.a, p.b, w, beta_target), transfer_G(p.a, p.b, w, beta_prime)
    if not ga < bb:
        raise HypothesisError(["G(beta_target) must be below group B's utility-maximizing rate"])
    # parity
    a, b = p.ua[quantile(p.a.dist, beta_target) - 1], p.ub[quantile(p.b.dist, beta_target) - 1]
    a2 = p.ua[quantile_plus(p.a.dist, beta_prime) - 1]
    b2 = p.ub[quantile_plus(p.b.dist, beta_prime) - 1]
    # equal opportunity
    e, f = ra[quantile(p.a.dist, beta_target) - 1], rb[quantile(p.b.dist, ga) - 1]
    e2 = ra[quantile_plus(p.a.dist, beta_prime) - 1]
    f2 = rb[quantile_plus(p.b.dist, gb) - 1]
    signs = {"parity lower": (a, b), "parity upper": (a2, 1.0),
             "eqopt lower": (e, f), "eqopt upper": (e2, 1.0)}
    bad = [f"{k}: need negative group-A and positive group-B marginal value"
           for k, (x, y) in signs.items() if not (x < 0 < y)]
    if bad:
        raise HypothesisError(bad)
    flags = _flags(beta_prime, betas)
    dp = ProportionInterval(_upper_share(a2, b2), _threshold(a, b), "demparity_rate_between",
                            beta_target, beta_prime, flags)
    eo = ProportionInterval(_upper_share(e2, f2), _threshold(e, f), "eqopt_rate_between",
                            beta_target, beta_prime, flags)
    return dp, eo


def _translation_shift(a: ScoreDistribution, b: ScoreDistribution) -> int | None:
    """Integer ``d > 0`` with ``pi_A(x) = pi_B(x + d)``, if any."""
    sa, sb = np.nonzero(a.pmf > 0)[0], np.nonzero(b.pmf > 0)[0]
    d = int(sb[0] - sa[0])
    if d <= 0 or sa.size != sb.size or not np.array_equal(sa + d, sb):
        return None
    if not np.allclose(a.pmf[sa], b.pmf[sb], rtol=0, atol=1e-12):
        return None
    return d


@dataclass(frozen=True)
class AvoidHarmReport:
    """Shares of group A for which parity overshoots ``beta_target`` while
    equal opportunity stays below it, with the structural checks."""

    interval: ProportionInterval
    shift: int
    g_exceeds_beta: bool
    mean_ratio_below_quantile_ratio: bool


def cor_avoid_harm_interval(groups, u, beta_target: float,
                            betas: SpecialBetas | None = None) -> AvoidHarmReport:
    """Interval for translated groups with a shared linear repayment curve."""
    a, b = check_group_pair(groups)
    fails = []
    d = _translation_shift(a.dist, b.dist)
    if d is None:
        fails.append("group B must be group A translated up by a positive integer")
    if not np.allclose(a.rho, b.rho, rtol=0, atol=1e-12):
        fails.append("groups must share the repayment curve")
    if np.any(np.abs(np.diff(a.rho, 2)) > 1e-12):
        fails.append("repayment probability must be linear in the score")
    mu_a = a.dist.mean()
    xs = np.arange(1, a.C + 1)
    if not beta_target > float(a.pmf[xs > mu_a].sum()):
        fails.append("beta_target must exceed the mass above group A's mean")
    if fails:
        raise HypothesisError(fails)
    p = _Pair(groups, u)
    w, ra, rb = p.eqopt()
    ga = transfer_G(a, b, w, beta_target)
    x = p.ua[quantile(a.dist, beta_target) - 1]
    y = p.ub[quantile(b.dist, beta_target) - 1]
    e = ra[quantile_plus(a.dist, beta_target) - 1]
    f = rb[quantile_plus(b.dist, ga) - 1]
    bad = []
    if not x < 0 < y:
        bad.append("parity: need u_A(Q_A) < 0 < u_B(Q_B) at beta_target")
    if not e < 0:
        bad.append("equal opportunity: need negative group-A marginal value")
    if bad:
        raise HypothesisError(bad)
    lo, hi = _upper_share(e, f), _threshold(x, y)
    if not lo < hi:
        raise HypothesisError([f"empty interval [{lo!r}, {hi!r}]"])
    qa, qb = quantile(a.dist, beta_target), quantile(b.dist, beta_target)
    mean_b = b.dist.mean()
    return AvoidHarmReport(
        ProportionInterval(lo, hi, "demparity_above_eqopt_below", beta_target,
                           flags=_flags(beta_target, betas)),
        d, bool(ga > beta_target), bool(mean_b / mu_a < qb / qa))


@dataclass(frozen=True)
class UnderloanReport:
    """Whether group A is underselected by equal opportunity.

    ``predicate`` is the rate/true-positive-rate comparison at the
    utility-maximizing solution.  ``chain`` records whether the solvers
    return ``eqopt < maxutil < demparity`` for group A, and ``chain_forced``
    whether the first-order conditions at the utility-maximizing rate force it.
    """

    predicate: bool
    beta_maxutil: tuple[float, float]
    tpr_maxutil: tuple[float, float]
    beta_eqopt: float
    beta_demparity: float
    chain: bool
    chain_forced: bool


def eqopt_underloan_predicate(groups, u) -> UnderloanReport:
    p = _Pair(groups, u)
    mu = p.mu
    (ba, bb), (ta, tb) = mu.beta, (mu.groups[0].tpr, mu.groups[1].tpr)
    pred = ba < bb and ta > tb
    eo, dp = solve_eqopt(groups, u), solve_demparity(groups, u)
    bea, bda = eo.beta[0], dp.beta[0]
    w, ra, rb = p.eqopt()
    g = p.a.proportion
    dp_slope = g * p.ua[quantile(p.a.dist, ba) - 1] + (1 - g) * p.ub[quantile(p.b.dist, ba) - 1]
    gb = transfer_G(p.a, p.b, w, ba)
    eo_slope = (g * ra[quantile_plus(p.a.dist, ba) - 1]
                + (1 - g) * rb[quantile_plus(p.b.dist, gb) - 1])
    forced = ba > 0 and dp_slope > SIGN_TOL and eo_slope < -SIGN_TOL
    return UnderloanReport(pred, (ba, bb), (ta, tb), bea, bda,
                           bool(bea < ba < bda), bool(forced))


def estimated_groups(groups, err: MeasurementError | Sequence[MeasurementError | None]):
    """Groups whose distributions are replaced by their observed-score versions.

    A single error applies to group A only.
    """
    a, b = check_group_pair(groups)
    errs = (err, None) if isinstance(err, MeasurementError) else tuple(err)
    out = []
    for g, e in zip((a, b), errs):
        out.append(g if e is None else replace(g, dist=apply_measurement_error(g.dist, e)))
    return tuple(out)


def tpr_dominates(group: GroupSpec, estimate: ScoreDistribution) -> bool:
    """True positive rates under the true distribution are at least those
    under ``estimate`` for every deterministic threshold."""
    true = group.pmf * group.rho
    est = estimate.pmf * group.rho
    tt = np.cumsum(true[::-1])[::-1] / true.sum()
    te = np.cumsum(est[::-1])[::-1] / est.sum()
    return bool(np.all(tt >= te - SIGN_TOL))


@dataclass(frozen=True)
class UnderselectionReport:
    """Group-A rates with true and underestimated scores."""

    true_rates: dict
    est_rates: dict
    dominated: bool
    tpr_dominated: bool
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def verify_underselection(groups, u, err: MeasurementError) -> UnderselectionReport:
    """Compare group-A selection rates before and after underestimating its scores."""
    a, b = check_group_pair(groups)
    est = estimated_groups((a, b), err)
    true_rates, est_rates = {}, {}
    for name in ("maxutil", "demparity", "eqopt"):
        true_rates[name] = solve(name, (a, b), u).beta[0]
        est_rates[name] = solve(name, est, u).beta[0]
    dominated = cdf_dominates(est[0].dist, a.dist, strict=False)
    tdom = tpr_dominates(a, est[0].dist)
    checks = {name: est_rates[name] <= true_rates[name] + SIGN_TOL
              for name in ("maxutil", "demparity")}
    if tdom:
        checks["eqopt"] = est_rates["eqopt"] <= true_rates["eqopt"] + SIGN_TOL
    return UnderselectionReport(true_rates, est_rates, dominated, tdom, checks)


@dataclass(frozen=True)
class Problem:
    """Everything needed to solve and analyse one two-group instance."""

    groups: tuple[GroupSpec, GroupSpec]
    utility: object
    outcome: object
    penalty: SoftPenalty = field(default_factory=SoftPenalty)

    def with_share(self, g_a: float) -> "Problem":
        a, b = self.groups
        return replace(self, groups=(replace(a, proportion=g_a),
                                     replace(b, proportion=1.0 - g_a)))

    def with_ratio(self, ratio: float) -> "Problem":
        us = tuple(f.with_ratio(ratio) for f in per_group(self.utility))
        return replace(self, utility=us)

    def outcome_curves(self):
        return tuple(outcome_curve(g, d) for g, d in zip(self.groups, per_group(self.outcome)))


def _row(problem: Problem, criterion: str, lam: float | None = None) -> dict:
    if criterion.startswith("soft"):
        w = (ConstraintWeights.equal_opportunity(problem.groups) if criterion == "soft_eqopt"
             else ConstraintWeights.demographic_parity(problem.groups))
        sr = solve_soft(problem.groups, problem.utility, w, lam, problem.penalty,
                        problem.outcome)
        res, gap = sr.result, sr.gap
    else:
        res, gap = solve(criterion, problem.groups, problem.utility, problem.outcome), None
    mu = solve_maxutil(problem.groups, problem.utility)
    row = {"criterion": criterion, "utility": res.utility}
    for j, (tag, curve) in enumerate(zip("AB", problem.outcome_curves())):
        dec = res.groups[j]
        betas = special_betas(curve, mu.groups[j].beta)
        row[f"beta_{tag}"] = dec.beta
        row[f"tpr_{tag}"] = dec.tpr
        row[f"delta_mu_{tag}"] = dec.delta_mu
        row[f"regime_{tag}"] = str(classify_regime(dec.beta, betas, curve))
    if gap is not None:
        row["gap"] = gap
    return row


SWEEP_PARAMETERS = ("g_A", "lambda", "u_ratio")


def sweep(problem: Problem, parameter: str, grid: Sequence[float],
          criteria: Sequence[str]) -> list[dict]:
    """Solve every criterion at every grid value of ``parameter``."""
    if parameter not in SWEEP_PARAMETERS:
        raise ModelError(f"unknown sweep parameter {parameter!r}")
    if len(grid) == 0:
        raise ModelError("sweep grid is empty")
    rows = []
    for value in grid:
        value = float(value)
        if parameter == "g_A":
            prob, lam = problem.with_share(value), None
        elif parameter == "u_ratio":
            prob, lam = problem.with_ratio(value), None
        else:
            prob, lam = problem, value
        for crit in criteria:
            if parameter == "lambda" and not crit.startswith("soft"):
                raise ModelError("lambda sweeps apply to soft criteria only")
            if crit.startswith("soft") and lam is None:
                raise ModelError("soft criteria need a lambda sweep")
            rows.append({"parameter": parameter, "value": value, **_row(prob, crit, lam)})
    return rows
