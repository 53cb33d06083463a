"""Reputations, the sender's incentive gap and the informative cutoff.

Market values are normalized so the high type is worth 1 and the low type
0; a reputation is then the market's posterior that the sender is high.
Reports are oriented so that report ``s`` is the correct report in state
``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ._roots import bisect
from .beliefs import (
    BRACKET_OFFSET,
    CrossingBeliefs,
    belief_cdf,
    belief_sf,
    crossing_beliefs,
    likelihood_of_belief,
)
from .errors import DegenerateCutoffError, DomainError, InternalConsistencyError
from .experiments import ExperimentPair

__all__ = [
    "EquilibriumSolution",
    "InformationStructure",
    "MatchingPayoffs",
    "ReportPosteriors",
    "Reputations",
    "classify_misleading",
    "incentive_gap",
    "matching_payoffs",
    "report_posteriors",
    "reputations",
    "solve_cutoff",
]

CUTOFF_TOL = 1e-10
MAX_ITER = 200
RESIDUAL_TOL = 1e-10
NEUTRAL_TOL = 1e-9


@dataclass(frozen=True)
class InformationStructure:
    """Prior ``mu`` on state 1, prior ``p`` on the high type, and the experiments."""

    mu: float
    p: float
    pair: ExperimentPair

    def __post_init__(self):
        if not (0.5 <= self.mu < 1.0):
            raise DomainError(f"mu must lie in [1/2, 1), got {self.mu}")
        if not (0.0 < self.p < 1.0):
            raise DomainError(f"p must lie in (0, 1), got {self.p}")
        if not self.pair.supports_nested:
            raise DomainError("high type's support must strictly contain the low type's")
        if not self.mu < self.pair.mu_upper:
            raise DomainError(
                f"mu = {self.mu} must be below 1/(1+lo_h) = {self.pair.mu_upper}"
            )

    def with_mu(self, mu):
        return InformationStructure(mu, self.p, self.pair)

    def with_p(self, p):
        return InformationStructure(self.mu, p, self.pair)


def _cells(xi, beta):
    """``H`` and ``1 - H`` for each (type, state)."""
    H = {(t, s): belief_cdf(xi.mu, xi.pair, beta, t, s) for t in "hl" for s in (0, 1)}
    S = {(t, s): belief_sf(xi.mu, xi.pair, beta, t, s) for t in "hl" for s in (0, 1)}
    return H, S


@dataclass(frozen=True)
class Reputations:
    """Posterior on the high type after report ``m`` in state ``s``, stored as ``r_ms``."""

    r00: float
    r01: float
    r10: float
    r11: float

    def __getitem__(self, key):
        m, s = key
        return getattr(self, f"r{m}{s}")

    @property
    def orientation_margin(self):
        """``min(r00 - r10, r11 - r01)``; positive when correct reports pay."""
        return min(self.r00 - self.r10, self.r11 - self.r01)

    def to_dict(self):
        return {"r_00": self.r00, "r_01": self.r01, "r_10": self.r10, "r_11": self.r11}


def reputations(xi, beta):
    """Market posteriors on the high type when both types use cutoff ``beta``."""
    if not (0.0 < beta < 1.0):
        raise DomainError(f"cutoff must lie in (0, 1), got {beta}")
    H, S = _cells(xi, beta)
    p = xi.p
    r = {}
    for s in (0, 1):
        low_mass = p * H["h", s] + (1 - p) * H["l", s]
        high_mass = p * S["h", s] + (1 - p) * S["l", s]
        if low_mass <= 0.0 or high_mass <= 0.0:
            raise DegenerateCutoffError(
                f"cutoff {beta} leaves a report with zero probability in state {s}"
            )
        r[0, s] = p * H["h", s] / low_mass
        r[1, s] = p * S["h", s] / high_mass
    return Reputations(r[0, 0], r[0, 1], r[1, 0], r[1, 1])


def _gap_from_reps(rep, b):
    return (b * rep.r11 + (1 - b) * rep.r10) - (b * rep.r01 + (1 - b) * rep.r00)


def incentive_gap(xi, beta_conjecture, b):
    """Expected reputation from reporting 1 minus reporting 0 at belief ``b``.

    The market conjectures cutoff ``beta_conjecture``.
    """
    return _gap_from_reps(reputations(xi, beta_conjecture), b)


@dataclass(frozen=True)
class ReportPosteriors:
    given_report_1: float
    given_report_0: float


def report_posteriors(xi, beta):
    """Receiver's posterior on state 1 after each report under cutoff ``beta``."""
    H, S = _cells(xi, beta)
    p, mu = xi.p, xi.mu
    e_s = {s: p * S["h", s] + (1 - p) * S["l", s] for s in (0, 1)}
    e_h = {s: p * H["h", s] + (1 - p) * H["l", s] for s in (0, 1)}
    den1 = mu * e_s[1] + (1 - mu) * e_s[0]
    den0 = mu * e_h[1] + (1 - mu) * e_h[0]
    g1 = mu * e_s[1] / den1 if den1 > 0 else math.nan
    g0 = mu * e_h[1] / den0 if den0 > 0 else math.nan
    return ReportPosteriors(g1, g0)


@dataclass(frozen=True)
class MatchingPayoffs:
    """Probability that the report matches the state, per type and overall."""

    total: float
    high: float
    low: float


def matching_payoffs(xi, beta):
    """Matching payoffs when every sender reports 1 exactly above ``beta``."""
    H, S = _cells(xi, beta)
    mu = xi.mu
    m = {t: mu * S[t, 1] + (1 - mu) * H[t, 0] for t in "hl"}
    return MatchingPayoffs(xi.p * m["h"] + (1 - xi.p) * m["l"], m["h"], m["l"])


def classify_misleading(beta):
    """Which report can be misleading: ``contrarian`` (0) above 1/2, ``conformist`` (1) below."""
    if abs(beta - 0.5) <= NEUTRAL_TOL:
        return "none"
    return "contrarian" if beta > 0.5 else "conformist"


@dataclass(frozen=True)
class EquilibriumSolution:
    """Informative equilibrium of one information structure.

    When ``exists`` is false only the crossing beliefs, the reservation
    value and ``receiver_payoff = reservation`` are filled in.
    ``margin`` is the raw ``matching_total - reservation``.
    """

    exists: bool
    crossing: CrossingBeliefs
    reservation: float
    receiver_payoff: float
    influential: bool
    beta: float | None = None
    ell: float | None = None
    reputations: Reputations | None = None
    matching_total: float | None = None
    matching_h: float | None = None
    matching_l: float | None = None
    misleading: str | None = None
    residual: float | None = None
    margin: float | None = None

    def to_dict(self):
        rep = self.reputations.to_dict() if self.reputations else dict.fromkeys(
            ("r_00", "r_01", "r_10", "r_11"))
        return {
            "exists": self.exists,
            "beta": self.beta,
            "ell": self.ell,
            "beta_dagger_0": self.crossing.beta_dagger_0,
            "beta_dagger_1": self.crossing.beta_dagger_1,
            **rep,
            "matching_total": self.matching_total,
            "matching_h": self.matching_h,
            "matching_l": self.matching_l,
            "reservation": self.reservation,
            "receiver_payoff": self.receiver_payoff,
            "influential": self.influential,
            "misleading": self.misleading,
            "residual": self.residual,
            "margin": self.margin,
        }


def cutoff_residual(xi, beta):
    """Indifference residual when the conjectured cutoff equals the sender's belief."""
    return _gap_from_reps(reputations(xi, beta), beta)


def solve_cutoff(xi, crossing=None):
    """Solve for the informative cutoff by bisection between the crossing beliefs.

    ``crossing`` may be supplied to skip recomputing the crossing beliefs.
    Returns ``exists=False`` when the state-1 crossing is not below the
    state-0 crossing.
    """
    cb = crossing if crossing is not None else crossing_beliefs(xi.mu, xi.pair)
    if not cb.ordered:
        return EquilibriumSolution(
            exists=False, crossing=cb, reservation=xi.mu, receiver_payoff=xi.mu,
            influential=False,
        )
    lo = cb.beta_dagger_1 + BRACKET_OFFSET
    hi = cb.beta_dagger_0 - BRACKET_OFFSET
    g = lambda b: cutoff_residual(xi, b)
    glo, ghi = g(lo), g(hi)
    try:
        beta = bisect(g, lo, hi, xtol=CUTOFF_TOL, maxiter=MAX_ITER, flo=glo, fhi=ghi,
                       ftol=RESIDUAL_TOL)
    except ValueError:
        raise InternalConsistencyError(
            f"indifference residual does not change sign on ({lo:.12g}, {hi:.12g}): "
            f"g(lo)={glo:.3g}, g(hi)={ghi:.3g} at mu={xi.mu}, p={xi.p}, "
            f"pair={xi.pair.describe()}"
        ) from None
    rep = reputations(xi, beta)
    pay = matching_payoffs(xi, beta)
    margin = pay.total - xi.mu
    return EquilibriumSolution(
        exists=True,
        crossing=cb,
        reservation=xi.mu,
        receiver_payoff=max(pay.total, xi.mu),
        influential=bool(margin > 0.0),
        beta=beta,
        ell=float(likelihood_of_belief(xi.mu, beta)),
        reputations=rep,
        matching_total=pay.total,
        matching_h=pay.high,
        matching_l=pay.low,
        misleading=classify_misleading(beta),
        residual=_gap_from_reps(rep, beta),
        margin=margin,
    )
