"""Utility and outcome functions, piecewise-linear rate curves and transfer maps."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .core import (
    GroupSpec,
    ModelError,
    ScoreDistribution,
    _as_vector,
    _check_policy,
    check_group_pair,
    tail_sums,
)

SIGN_TOL = 1e-12


class ConcavityWarning(UserWarning):
    """A curve was built from a non-monotone weight and may not be concave."""


@dataclass(frozen=True)
class UtilityFn:
    """Institution utility per score.

    ``u_plus``/``u_minus`` and ``rho`` are kept when the utility was built
    from repayment probabilities, so the ratio can be varied later.
    """

    values: np.ndarray
    u_plus: float | None = None
    u_minus: float | None = None
    rho: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", _as_vector(self.values, "utility"))

    @classmethod
    def affine(cls, rho, u_plus: float, u_minus: float) -> "UtilityFn":
        rho = _as_vector(rho, "rho")
        return cls(u_plus * rho + u_minus * (1.0 - rho), u_plus, u_minus, rho)

    def with_ratio(self, ratio: float) -> "UtilityFn":
        """Rebuild with ``u_minus = ratio * u_plus``."""
        if self.rho is None:
            raise ModelError("utility ratio is only defined for affine utilities")
        return UtilityFn.affine(self.rho, self.u_plus, ratio * self.u_plus)


@dataclass(frozen=True)
class OutcomeFn:
    """Expected score change of a selected individual.

    ``delta_n`` is the change for a rejected individual (zero by default).
    """

    delta_p: np.ndarray
    delta_n: np.ndarray | None = None

    def __post_init__(self):
        dp = _as_vector(self.delta_p, "delta")
        object.__setattr__(self, "delta_p", dp)
        if self.delta_n is not None:
            dn = _as_vector(self.delta_n, "delta_n")
            if dn.size != dp.size:
                raise ModelError("delta_n length does not match delta")
            object.__setattr__(self, "delta_n", dn)

    @property
    def values(self) -> np.ndarray:
        return self.delta_p

    @classmethod
    def affine(cls, rho, c_plus: float, c_minus: float, clamp: bool = False,
               labels=None) -> "OutcomeFn":
        """Gain ``c_plus`` on repayment and ``c_minus`` on default.

        With ``clamp`` the change cannot push a score past either end of the
        label range.
        """
        rho = _as_vector(rho, "rho")
        gain = np.full(rho.size, float(c_plus))
        loss = np.full(rho.size, float(c_minus))
        if clamp:
            lab = np.arange(1.0, rho.size + 1) if labels is None else _as_vector(labels, "labels")
            gain = np.minimum(gain, lab[-1] - lab)
            loss = np.maximum(loss, lab[0] - lab)
        return cls(rho * gain + (1.0 - rho) * loss)


UtilityLike = Union[UtilityFn, Sequence[UtilityFn]]
OutcomeLike = Union[OutcomeFn, Sequence[OutcomeFn]]


def per_group(fn, n: int = 2) -> tuple:
    """Expand a shared function into one copy per group."""
    if isinstance(fn, (UtilityFn, OutcomeFn)):
        return (fn,) * n
    fns = tuple(fn)
    if len(fns) != n:
        raise ModelError(f"expected {n} per-group functions")
    return fns


@dataclass(frozen=True)
class ConstraintWeights:
    """Per-group weights ``w_A, w_B`` of a linear fairness constraint."""

    w_a: np.ndarray
    w_b: np.ndarray
    name: str = "linear"

    def __post_init__(self):
        for attr in ("w_a", "w_b"):
            w = _as_vector(getattr(self, attr), attr)
            if np.any(w <= 0):
                raise ModelError("constraint weights must be strictly positive")
            object.__setattr__(self, attr, w)

    def __iter__(self):
        return iter((self.w_a, self.w_b))

    @classmethod
    def demographic_parity(cls, groups) -> "ConstraintWeights":
        a, b = check_group_pair(groups)
        return cls(np.ones(a.C), np.ones(b.C), "demparity")

    @classmethod
    def equal_opportunity(cls, groups) -> "ConstraintWeights":
        a, b = check_group_pair(groups)
        ws = []
        for g in (a, b):
            if np.any(g.rho <= 0):
                raise ModelError("equal opportunity needs rho > 0 at every score")
            ws.append(g.rho / float(np.dot(g.rho, g.pmf)))
        return cls(ws[0], ws[1], "eqopt")


def _check_len(arr: np.ndarray, C: int, name: str) -> np.ndarray:
    if arr.size != C:
        raise ModelError(f"{name} length does not match the score grid")
    return arr


def group_utility(group: GroupSpec, tau, u: UtilityFn) -> float:
    tau = _check_policy(group.dist, tau)
    return float(np.dot(group.pmf * _check_len(u.values, group.C, "utility"), tau))


def total_utility(groups, taus, u: UtilityLike) -> float:
    """Population utility of the per-group policies ``taus``."""
    gs = check_group_pair(groups)
    us = per_group(u)
    return sum(g.proportion * group_utility(g, t, ui) for g, t, ui in zip(gs, taus, us))


def outcome_change(group: GroupSpec, tau, delta: OutcomeFn) -> float:
    """Expected score change of the group under ``tau``."""
    tau = _check_policy(group.dist, tau)
    dp = _check_len(delta.delta_p, group.C, "delta")
    if delta.delta_n is None:
        return float(np.dot(group.pmf * dp, tau))
    return float(np.dot(group.pmf, tau * dp + (1.0 - tau) * delta.delta_n))


def tpr(group: GroupSpec, tau) -> float:
    """True positive rate: share of would-be repayers that are selected."""
    tau = _check_policy(group.dist, tau)
    mass = group.pmf * group.rho
    total = mass.sum()
    if total <= 0:
        raise ModelError("true positive rate undefined: no repaying mass")
    return float(np.dot(mass, tau) / total)


def check_institution_assumption(u: UtilityFn, delta: OutcomeFn) -> bool:
    """Every score with positive utility also has a positive outcome change."""
    uv, dv = u.values, delta.delta_p
    if uv.size != dv.size:
        raise ModelError("utility and outcome lengths differ")
    return bool(np.all(dv[uv > 0] > 0))


def affine_assumption_holds(u_plus: float, u_minus: float,
                            c_plus: float, c_minus: float) -> bool:
    """Ratio test for affine utility and outcome: ``u-/u+ < c-/c+``."""
    if u_plus <= 0 or c_plus <= 0:
        raise ModelError("u_plus and c_plus must be positive")
    return u_minus / u_plus < c_minus / c_plus


@dataclass(frozen=True)
class PiecewiseLinearCurve:
    """Continuous piecewise-linear function on ``[x[0], x[-1]]``.

    ``scores[k]`` is the score admitted along segment ``k`` when the curve
    comes from threshold policies.
    """

    x: np.ndarray
    y: np.ndarray
    slopes: np.ndarray
    scores: np.ndarray

    @property
    def breakpoints(self) -> np.ndarray:
        return self.x

    @property
    def values(self) -> np.ndarray:
        return self.y

    def _right_index(self, x: float) -> int:
        k = int(np.searchsorted(self.x, x, side="right")) - 1
        return min(max(k, 0), self.slopes.size - 1)

    def _left_index(self, x: float) -> int:
        k = int(np.searchsorted(self.x, x, side="left")) - 1
        return min(max(k, 0), self.slopes.size - 1)

    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(self.x, xs, side="right") - 1, 0, self.slopes.size - 1)
        out = self.y[k] + self.slopes[k] * (xs - self.x[k])
        return float(out) if out.ndim == 0 else out

    def right_derivative(self, x: float) -> float:
        return float(self.slopes[self._right_index(x)])

    def left_derivative(self, x: float) -> float:
        return float(self.slopes[self._left_index(x)])

    def is_concave(self, tol: float = SIGN_TOL) -> bool:
        return bool(np.all(np.diff(self.slopes) <= tol))

    def argmax_interval(self, tol: float = SIGN_TOL) -> tuple[float, float]:
        """Maximizing interval of a concave curve.

        Slopes within ``tol`` of zero count as flat.
        """
        s = self.slopes
        nonpos = np.nonzero(s <= tol)[0]
        if nonpos.size == 0:
            return float(self.x[-1]), float(self.x[-1])
        i = int(nonpos[0])
        neg = np.nonzero(s[i:] < -tol)[0]
        j = i + int(neg[0]) if neg.size else s.size
        return float(self.x[i]), float(self.x[j])

    def inverse(self, y: float) -> float:
        """Inverse of a strictly increasing curve."""
        if y < self.y[0] - SIGN_TOL or y > self.y[-1] + SIGN_TOL:
            raise ModelError(f"value {y!r} outside the curve range")
        k = int(np.searchsorted(self.y, y, side="right")) - 1
        k = min(max(k, 0), self.slopes.size - 1)
        x = self.x[k] + (y - self.y[k]) / self.slopes[k]
        return float(min(max(x, self.x[0]), self.x[-1]))

    def superlevel_right_end(self, level: float, start: float,
                             tol: float = SIGN_TOL) -> tuple[float, bool]:
        """Right end of ``{x >= start : f(x) >= level}`` for concave ``f``.

        The flag is True when the set reaches the right end of the domain.
        """
        if self(self.x[-1]) >= level - tol:
            return float(self.x[-1]), True
        k = self._right_index(start)
        for j in range(k, self.slopes.size):
            if self.y[j + 1] < level - tol:
                x0 = max(float(self.x[j]), start)
                y0 = self(x0)
                if self.slopes[j] == 0.0 or y0 < level:
                    return x0, False
                return x0 + (level - y0) / self.slopes[j], False
        return float(self.x[-1]), True


def threshold_curve(dist: ScoreDistribution, weight: np.ndarray,
                    scale: np.ndarray | None = None,
                    offset: float = 0.0) -> PiecewiseLinearCurve:
    """Curve of ``<pi * weight, tau>`` over threshold policies ``tau``.

    The horizontal coordinate is ``<pi * scale, tau>`` (selection rate when
    ``scale`` is None).  Zero-mass scores are merged away.
    """
    weight = np.asarray(weight, dtype=float)
    pmf = dist.pmf
    xt = dist.tails if scale is None else tail_sums(pmf * np.asarray(scale, dtype=float))
    # masses too small to move the tail sum are merged with their neighbours
    live = np.nonzero((pmf > 0) & (xt[:-1] > xt[1:]))[0][::-1]
    slopes = weight[live] if scale is None else weight[live] / np.asarray(scale)[live]
    yt = tail_sums(pmf * weight)
    x = np.concatenate(([0.0], xt[live]))
    y = offset + np.concatenate(([0.0], yt[live]))
    return PiecewiseLinearCurve(x, y, slopes, live + 1)


def _weight_monotone(dist: ScoreDistribution, weight: np.ndarray) -> bool:
    w = weight[dist.pmf > 0]
    return bool(np.all(np.diff(w) >= -SIGN_TOL * np.maximum(1.0, np.abs(w[1:]))))


def outcome_curve(group: GroupSpec, delta: OutcomeFn) -> PiecewiseLinearCurve:
    """Expected score change as a function of the selection rate."""
    dp = _check_len(delta.delta_p, group.C, "delta")
    if delta.delta_n is None:
        weight, offset = dp, 0.0
    else:
        weight = dp - delta.delta_n
        offset = float(np.dot(group.pmf, delta.delta_n))
    if not _weight_monotone(group.dist, weight):
        warnings.warn("outcome weight is not non-decreasing; curve may not be concave",
                      ConcavityWarning, stacklevel=2)
    return threshold_curve(group.dist, weight, offset=offset)


def utility_curve(group: GroupSpec, u: UtilityFn) -> PiecewiseLinearCurve:
    """Group utility as a function of the selection rate."""
    uv = _check_len(u.values, group.C, "utility")
    if not _weight_monotone(group.dist, uv):
        warnings.warn("utility is not non-decreasing; curve may not be concave",
                      ConcavityWarning, stacklevel=2)
    return threshold_curve(group.dist, uv)


def transfer_curve(group: GroupSpec, w) -> PiecewiseLinearCurve:
    """The map ``beta -> <pi * w, tau(beta)>`` as a curve."""
    w = _check_len(np.asarray(w, dtype=float), group.C, "weight")
    if np.any(w <= 0):
        raise ModelError("transfer weights must be strictly positive")
    return threshold_curve(group.dist, w)


def transfer_T(group: GroupSpec, w, beta: float) -> float:
    """Constraint value of the threshold policy with selection rate ``beta``."""
    if not 0.0 <= beta <= 1.0:
        raise ModelError("beta must lie in [0, 1]")
    return transfer_curve(group, w)(beta)


def transfer_T_inverse(group: GroupSpec, w, t: float) -> float:
    return transfer_curve(group, w).inverse(t)


def transfer_G(group_a: GroupSpec, group_b: GroupSpec, w: ConstraintWeights,
               beta: float) -> float:
    """Rate for group B matching group A's constraint value at rate ``beta``."""
    t = transfer_T(group_a, w.w_a, beta)
    tb = transfer_curve(group_b, w.w_b)
    if t > tb.y[-1] + SIGN_TOL:
        raise ModelError("no group-B rate attains this constraint value")
    return tb.inverse(min(t, float(tb.y[-1])))


def utility_in_constraint(group: GroupSpec, u: UtilityFn, w) -> PiecewiseLinearCurve:
    """Group utility as a function of the constraint value ``t``."""
    uv = _check_len(u.values, group.C, "utility")
    w = _check_len(np.asarray(w, dtype=float), group.C, "weight")
    return threshold_curve(group.dist, uv, scale=w)
