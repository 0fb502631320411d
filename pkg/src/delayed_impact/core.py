"""Score distributions, policies, quantiles and selection rates.

Scores are the integers ``1..C``.  Arrays indexed by score are stored
0-based, so ``pmf[c - 1]`` is the mass at score ``c``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SUM_TOL = 1e-9
RENORMALIZE_TOL = 1e-6
EQUIV_TOL = 1e-12


class ModelError(ValueError):
    """Invalid model input (distribution, policy or group data)."""


class RenormalizationWarning(UserWarning):
    """A distribution was rescaled to sum to one."""


def _as_vector(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ModelError(f"{name} must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def tail_sums(values: np.ndarray) -> np.ndarray:
    """Return ``t`` with ``t[i] = sum(values[i:])`` and a trailing zero."""
    out = np.zeros(values.size + 1)
    out[:-1] = np.cumsum(values[::-1])[::-1]
    return out


@dataclass(frozen=True)
class ScoreDistribution:
    """Probability mass function over the score grid ``1..C``.

    Masses summing to one within ``1e-6`` are rescaled (with a warning
    beyond ``1e-9``); anything further off is rejected.
    """

    pmf: np.ndarray
    tails: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pmf = np.array(self.pmf, dtype=float)
        if pmf.ndim != 1 or pmf.size == 0:
            raise ModelError("pmf must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(pmf)) or np.any(pmf < 0):
            raise ModelError("pmf entries must be finite and non-negative")
        total = pmf.sum()
        if abs(total - 1.0) > RENORMALIZE_TOL:
            raise ModelError(f"pmf sums to {total!r}, not 1")
        if abs(total - 1.0) > SUM_TOL:
            warnings.warn(f"pmf sums to {total!r}; renormalizing",
                          RenormalizationWarning, stacklevel=3)
        if total != 1.0:
            pmf = pmf / total
        pmf.setflags(write=False)
        tails = tail_sums(pmf)
        tails.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)
        object.__setattr__(self, "tails", tails)

    @property
    def C(self) -> int:
        return self.pmf.size

    def tail(self, c: int) -> float:
        """Mass at scores ``>= c`` (zero for ``c > C``)."""
        if c > self.C:
            return 0.0
        return float(self.tails[max(c, 1) - 1])

    def mean(self) -> float:
        return float(np.dot(self.pmf, np.arange(1, self.C + 1)))


@dataclass(frozen=True)
class GroupSpec:
    """A group: its score distribution, repayment curve and population share."""

    dist: ScoreDistribution
    rho: np.ndarray
    proportion: float
    name: str = ""

    def __post_init__(self):
        rho = _as_vector(self.rho, "rho")
        if rho.size != self.dist.C:
            raise ModelError("rho length does not match the score grid")
        if np.any(rho < 0) or np.any(rho > 1):
            raise ModelError("rho must lie in [0, 1]")
        if not 0.0 <= self.proportion <= 1.0:
            raise ModelError("proportion must lie in [0, 1]")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "proportion", float(self.proportion))

    @property
    def C(self) -> int:
        return self.dist.C

    @property
    def pmf(self) -> np.ndarray:
        return self.dist.pmf


def check_group_pair(groups: Sequence[GroupSpec]) -> tuple[GroupSpec, GroupSpec]:
    """Validate a two-group population and return it as a tuple."""
    if len(groups) != 2:
        raise ModelError("exactly two groups are required")
    a, b = groups
    if a.C != b.C:
        raise ModelError("groups must share the score grid")
    if abs(a.proportion + b.proportion - 1.0) > SUM_TOL:
        raise ModelError("group proportions must sum to 1")
    return a, b


@dataclass(frozen=True)
class ThresholdPolicy:
    """Select scores above ``c`` surely and score ``c`` with probability ``gamma``.

    ``c = C + 1`` with ``gamma = 1`` is the empty policy.
    """

    c: int
    gamma: float

    def __post_init__(self):
        if self.c < 1:
            raise ModelError("threshold score must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ModelError("gamma must lie in (0, 1]")

    def to_policy(self, C: int) -> np.ndarray:
        if self.c > C + 1:
            raise ModelError("threshold beyond the score grid")
        tau = np.zeros(C)
        tau[self.c:] = 1.0
        if self.c <= C:
            tau[self.c - 1] = self.gamma
        return tau


def policy_from_threshold(c: int, gamma: float, C: int) -> np.ndarray:
    return ThresholdPolicy(c, gamma).to_policy(C)


def _check_policy(dist: ScoreDistribution, tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (dist.C,):
        raise ModelError("policy length does not match the score grid")
    if np.any(tau < 0) or np.any(tau > 1):
        raise ModelError("policy entries must lie in [0, 1]")
    return tau


def _check_beta(beta: float) -> float:
    # rates computed from tail sums can overshoot 1 by rounding
    if not -EQUIV_TOL <= beta <= 1.0 + EQUIV_TOL:
        raise ModelError("beta must lie in [0, 1]")
    return min(max(float(beta), 0.0), 1.0)


def selection_rate(dist: ScoreDistribution, tau) -> float:
    """Fraction of the group selected by ``tau``."""
    return float(np.dot(dist.pmf, _check_policy(dist, tau)))


def quantile(dist: ScoreDistribution, beta: float) -> int:
    """Largest score whose upper tail mass strictly exceeds ``beta``.

    Returns 1 at ``beta = 1``.
    """
    beta = _check_beta(beta)
    above = np.nonzero(dist.tails[:-1] > beta)[0]
    return int(above[-1]) + 1 if above.size else 1


def quantile_plus(dist: ScoreDistribution, beta: float) -> int:
    """Largest score whose upper tail mass is at least ``beta``."""
    beta = _check_beta(beta)
    if beta == 0.0:
        return dist.C
    above = np.nonzero(dist.tails[:-1] >= beta)[0]
    return int(above[-1]) + 1 if above.size else 1


def inverse_selection_rate(dist: ScoreDistribution, beta: float) -> ThresholdPolicy:
    """Canonical threshold policy with selection rate ``beta``.

    Ties between equivalent policies are broken by preferring ``gamma = 1``
    at the lowest admissible score; rate zero maps to the empty policy.
    """
    beta = _check_beta(beta)
    if beta >= dist.tails[0]:
        return ThresholdPolicy(1, 1.0)
    c = quantile(dist, beta)
    hi, lo = dist.tails[c - 1], dist.tails[c]
    gamma = (beta - lo) / (hi - lo)
    if gamma <= 0.0:
        return ThresholdPolicy(c + 1, 1.0)
    return ThresholdPolicy(c, min(float(gamma), 1.0))


def policies_equivalent(dist: ScoreDistribution, tau1, tau2) -> bool:
    """True when the policies differ only on zero-mass scores."""
    tau1, tau2 = _check_policy(dist, tau1), _check_policy(dist, tau2)
    differ = np.abs(tau1 - tau2) > EQUIV_TOL
    return bool(np.all(dist.pmf[differ] == 0.0))


def cdf_dominates(pi_a: ScoreDistribution, pi_b: ScoreDistribution,
                  strict: bool = True) -> bool:
    """Whether ``pi_b`` puts more mass above every score than ``pi_a``.

    Thresholds at which both upper tails vanish are skipped.
    """
    if pi_a.C != pi_b.C:
        raise ModelError("distributions must share the score grid")
    ta, tb = pi_a.tails[1:-1], pi_b.tails[1:-1]
    if not strict:
        return bool(np.all(ta <= tb + EQUIV_TOL))
    live = (ta > 0) | (tb > 0)
    return bool(np.all(ta[live] < tb[live]))


@dataclass(frozen=True)
class MeasurementError:
    """Non-positive score shift ``e(x)`` with ``x + e(x)`` inside the grid."""

    offsets: np.ndarray

    def __post_init__(self):
        off = np.array(self.offsets, dtype=int)
        if off.ndim != 1:
            raise ModelError("offsets must be 1-d")
        if np.any(off > 0):
            raise ModelError("measurement error must be non-positive")
        dest = np.arange(1, off.size + 1) + off
        if np.any(dest < 1):
            raise ModelError("measurement error shifts a score off the grid")
        off.setflags(write=False)
        object.__setattr__(self, "offsets", off)

    @classmethod
    def constant(cls, shift: int, C: int) -> "MeasurementError":
        """Shift every score by ``shift``, clamped at score 1."""
        x = np.arange(1, C + 1)
        return cls(np.maximum(shift, 1 - x))


def apply_measurement_error(dist: ScoreDistribution,
                            err: MeasurementError) -> ScoreDistribution:
    """Distribution of observed scores ``x + e(x)``."""
    if err.offsets.size != dist.C:
        raise ModelError("offsets length does not match the score grid")
    dest = np.arange(dist.C) + err.offsets
    est = np.zeros(dist.C)
    np.add.at(est, dest, dist.pmf)
    return ScoreDistribution(est)
