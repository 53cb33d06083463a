"""Posterior state beliefs and the belief-distribution transform.

A sender with prior ``mu`` who observes likelihood ratio ``ell`` holds
belief ``mu*ell / (mu*ell + 1 - mu)`` that the state is 1.  ``H(beta|t,s)``
is the probability that a type-``t`` sender's belief is at most ``beta``
in state ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._roots import bisect
from .errors import DomainError, InconsistentExperimentError, SingleCrossingError

__all__ = [
    "BeliefBounds",
    "CrossingBeliefs",
    "belief_bounds",
    "belief_cdf",
    "belief_of_likelihood",
    "belief_pdf",
    "crossing_belief",
    "crossing_beliefs",
    "crossing_gap",
    "crossing_sign_changes",
    "likelihood_of_belief",
    "propagate_crossing",
]

BRACKET_OFFSET = 1e-12
CROSSING_TOL = 1e-10


def _check_mu(mu):
    if not (0.5 <= mu < 1.0):
        raise DomainError(f"prior mu must lie in [1/2, 1), got {mu}")


def belief_of_likelihood(mu, ell):
    """Posterior that the state is 1 after signal ``ell``; ``inf`` maps to 1."""
    arr = np.asarray(ell, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        out = np.where(np.isinf(arr), 1.0, mu * arr / (mu * arr + 1.0 - mu))
    return float(out) if out.ndim == 0 else out


def likelihood_of_belief(mu, beta):
    """Signal that induces belief ``beta``; ``beta >= 1`` maps to ``inf``."""
    arr = np.asarray(beta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(arr >= 1.0, np.inf, (1.0 - mu) / mu * arr / (1.0 - arr))
    out = np.where(arr <= 0.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def belief_cdf(mu, pair, beta, t, s):
    """``H(beta|t,s)``: the signal CDF evaluated at the inducing likelihood ratio."""
    _check_mu(mu)
    return pair[t].cdf(likelihood_of_belief(mu, beta), s)


def belief_sf(mu, pair, beta, t, s):
    """``1 - H(beta|t,s)`` without cancellation."""
    _check_mu(mu)
    return pair[t].sf(likelihood_of_belief(mu, beta), s)


def belief_pdf(mu, pair, beta, t, s):
    """Density of the belief distribution, ``f(ell|t,s) * d ell / d beta``."""
    _check_mu(mu)
    model = pair[t]
    beta = np.asarray(beta, dtype=float)
    ell = likelihood_of_belief(mu, beta)
    sup = model.support
    inside = (ell >= sup.lo) & (ell <= sup.hi) & (beta < 1.0)
    safe = np.where(inside, ell, sup.lo)
    dens = model.pdf(safe, s)
    with np.errstate(divide="ignore", invalid="ignore"):
        jac = (1.0 - mu) / mu / (1.0 - beta) ** 2
        out = np.where(inside, dens * jac, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BeliefBounds:
    """Beliefs induced by the four support endpoints."""

    lo_h: float
    lo_l: float
    hi_l: float
    hi_h: float

    def as_tuple(self):
        return (self.lo_h, self.lo_l, self.hi_l, self.hi_h)


def belief_bounds(mu, pair):
    """Map support endpoints to beliefs and check their ordering.

    The high type's endpoints may equal 0 or 1 when its support is
    ``[0, inf]``; all other inequalities are strict.
    """
    _check_mu(mu)
    h, l = pair.high.support, pair.low.support
    b = BeliefBounds(
        belief_of_likelihood(mu, h.lo), belief_of_likelihood(mu, l.lo),
        belief_of_likelihood(mu, l.hi), belief_of_likelihood(mu, h.hi),
    )
    ok = 0.0 <= b.lo_h < b.lo_l < b.hi_l < b.hi_h <= 1.0 and 0.0 < b.lo_l and b.hi_l < 1.0
    if not ok:
        raise InconsistentExperimentError(
            f"belief bounds {b.as_tuple()} violate lo_h < lo_l < hi_l < hi_h"
        )
    return b


def crossing_gap(mu, pair, beta, s):
    """``H(beta|h,s) - H(beta|l,s)``."""
    return belief_cdf(mu, pair, beta, "h", s) - belief_cdf(mu, pair, beta, "l", s)


def crossing_belief(mu, pair, s):
    """Unique belief in the low type's range where the two types' ``H`` cross.

    Below the crossing the high type's ``H`` is larger, above it smaller.
    Raises :class:`SingleCrossingError` if that sign pattern fails at the
    ends of the bracket.
    """
    bounds = belief_bounds(mu, pair)
    lo = bounds.lo_l + BRACKET_OFFSET
    hi = bounds.hi_l - BRACKET_OFFSET
    glo = crossing_gap(mu, pair, lo, s)
    ghi = crossing_gap(mu, pair, hi, s)
    if not (glo > 0.0 and ghi < 0.0):
        raise SingleCrossingError(
            f"state {s}: H_h - H_l is {glo:.3g} at {lo:.6g} and {ghi:.3g} at {hi:.6g}; "
            "expected + then -"
        )
    return bisect(lambda b: crossing_gap(mu, pair, b, s), lo, hi,
                  xtol=CROSSING_TOL, flo=glo, fhi=ghi)


@dataclass(frozen=True)
class CrossingBeliefs:
    """Crossing beliefs in both states.

    ``ordered`` is true when the state-1 crossing lies strictly below the
    state-0 crossing, the condition for an informative cutoff to exist.
    """

    beta_dagger_0: float
    beta_dagger_1: float

    @property
    def ordered(self) -> bool:
        return self.beta_dagger_1 < self.beta_dagger_0


def crossing_beliefs(mu, pair):
    return CrossingBeliefs(crossing_belief(mu, pair, 0), crossing_belief(mu, pair, 1))


def propagate_crossing(beta_ref, mu_ref, mu):
    """Carry a crossing belief computed at prior ``mu_ref`` over to prior ``mu``."""
    _check_mu(mu_ref)
    _check_mu(mu)
    den = beta_ref * (mu - mu_ref) + mu_ref * (1.0 - mu)
    return beta_ref * mu * (1.0 - mu_ref) / den


def crossing_sign_changes(mu, pair, s, n=256):
    """Count sign changes of ``H_h - H_l`` on an ``n``-point grid inside the high range.

    Exact zeros are skipped, so a clean single crossing yields 1.
    """
    b = belief_bounds(mu, pair)
    grid = np.linspace(b.lo_h, b.hi_h, n + 2)[1:-1]
    gap = belief_cdf(mu, pair, grid, "h", s) - belief_cdf(mu, pair, grid, "l", s)
    signs = np.sign(gap)
    signs = signs[signs != 0]
    first_positive = bool(signs.size and signs[0] > 0)
    return int(np.count_nonzero(np.diff(signs))), first_positive


def is_belief(beta) -> bool:
    return 0.0 <= beta <= 1.0 and not math.isnan(beta)
