"""Comparative statics over the prior ``mu`` and the initial reputation ``p``.

Grid scans over ``mu`` run in parallel when ``threads > 1``; results are
always reduced in grid order, so output does not depend on worker count.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import pairwise

import numpy as np

from ._format import format_real
from ._roots import bisect
from .beliefs import crossing_beliefs
from .equilibrium import NEUTRAL_TOL, InformationStructure, solve_cutoff
from .errors import (
    DomainError,
    InternalConsistencyError,
    NoEquilibriumError,
    ReptalkError,
)
from .experiments import distance_to_perfect

__all__ = [
    "BELOW_HALF",
    "MuDerivative",
    "NestingReport",
    "PDerivative",
    "PayoffProfile",
    "ProfileRow",
    "RegionReport",
    "d_matching_d_mu",
    "d_matching_d_p",
    "indifference_gap_at_half",
    "influential_intervals",
    "mu_grid",
    "mu_indifferent",
    "payoff_profile",
    "region_nesting",
]

BELOW_HALF = "below 1/2"
REFINE_TOL = 1e-8
FD_STEP = 1e-4
EDGE_GAP = 1e-9


def mu_grid(pair, step, lo=0.5, hi=None):
    """Points ``lo, lo+step, ...`` strictly below ``hi`` (default: the prior bound)."""
    top = pair.mu_upper if hi is None else min(hi, pair.mu_upper)
    n = math.floor((top - lo) / step + 1e-9) + 1
    pts = lo + step * np.arange(max(n, 0))
    return pts[pts < top - 1e-12]


def _margin(p, pair, mu):
    sol = solve_cutoff(InformationStructure(float(mu), p, pair))
    return sol.margin if sol.exists else -math.inf


def _margin_chunk(args):
    p, pair, mus = args
    return [_margin(p, pair, m) for m in mus]


def _solve_chunk(args):
    p, pair, mus = args
    out = []
    for m in mus:
        try:
            out.append(solve_cutoff(InformationStructure(float(m), p, pair)))
        except ReptalkError as exc:
            out.append(exc)
    return out


def _parallel(fn, p, pair, mus, threads):
    mus = [float(m) for m in mus]
    if threads <= 1 or len(mus) < 2 * threads:
        return fn((p, pair, mus))
    chunks = [mus[i::threads] for i in range(threads)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(fn, [(p, pair, c) for c in chunks]))
    out = [None] * len(mus)
    for i, part in enumerate(parts):
        out[i::threads] = part
    return out


def _beta_at(p, pair, mu):
    sol = solve_cutoff(InformationStructure(mu, p, pair))
    if not sol.exists:
        raise NoEquilibriumError(f"no informative equilibrium at mu={mu}, p={p}")
    return sol.beta


def indifference_gap_at_half(p, pair):
    """``beta(1/2) - 1/2``: positive means the indifferent prior lies below 1/2."""
    return _beta_at(p, pair, 0.5) - 0.5


def mu_indifferent(p, pair, tol=1e-10):
    """Prior at which the equilibrium cutoff equals 1/2.

    Returns :data:`BELOW_HALF` when the cutoff already exceeds 1/2 at
    ``mu = 1/2`` by more than ``1e-9``; returns exactly 0.5 when it equals
    1/2 there within that tolerance.
    """
    cb = crossing_beliefs(0.5, pair)
    if not cb.ordered:
        raise NoEquilibriumError("pair admits no informative equilibrium at mu = 1/2")
    gap = indifference_gap_at_half(p, pair)
    if abs(gap) <= NEUTRAL_TOL:
        return 0.5
    if gap > 0:
        return BELOW_HALF
    hi = pair.mu_upper - 1e-6
    ghi = _beta_at(p, pair, hi) - 0.5
    if ghi <= 0:
        raise InternalConsistencyError(
            f"cutoff stays below 1/2 up to mu={hi}; monotonicity in mu fails"
        )
    return bisect(lambda m: _beta_at(p, pair, m) - 0.5, 0.5, hi, xtol=tol, flo=gap, fhi=ghi)


@dataclass(frozen=True)
class RegionReport:
    """Influential set of priors for one ``(p, pair)``.

    ``boundaries`` are the refined sign changes of ``matching_total - mu``.
    ``open_end`` is true when the last grid point is still influential, in
    which case the last interval ends at that grid point.
    """

    p: float
    mu_I: float | str | None
    intervals: list
    boundaries: list
    mu_bar_low: float | None
    mu_bar_high: float | None
    grid_step: float
    grid_hi: float
    open_end: bool
    merged: list = field(default_factory=list)

    @property
    def n_sign_changes(self):
        return len(self.boundaries)

    def contains(self, mu, slack=0.0):
        return any(a - slack <= mu <= b + slack for a, b in self.intervals)

    def to_dict(self):
        return {
            "p": self.p,
            "mu_I": self.mu_I,
            "intervals": [list(iv) for iv in self.intervals],
            "boundaries": list(self.boundaries),
            "mu_bar_low": self.mu_bar_low,
            "mu_bar_high": self.mu_bar_high,
            "grid_step": self.grid_step,
            "grid_hi": self.grid_hi,
            "open_end": self.open_end,
            "merged": [list(m) for m in self.merged],
        }


def influential_intervals(p, pair, grid_step=0.002, threads=1, compute_mu_I=True,
                          hi=None):
    """Scan ``mu`` for influentialness and refine every switch by bisection.

    Sign changes fewer than two grid steps apart are dropped as a pair and
    listed in ``merged``.
    """
    if not (0 < grid_step <= 0.005):
        raise DomainError(f"grid_step must lie in (0, 0.005], got {grid_step}")
    mus = mu_grid(pair, grid_step, hi=hi)
    margins = np.asarray(_parallel(_margin_chunk, p, pair, mus, threads))
    infl = margins > 0.0

    raw = []
    for i in np.flatnonzero(infl[1:] != infl[:-1]):
        a, b = float(mus[i]), float(mus[i + 1])
        root = bisect(lambda m: _margin(p, pair, m), a, b, xtol=REFINE_TOL,
                      flo=margins[i], fhi=margins[i + 1])
        raw.append((int(i), root))

    boundaries, merged = [], []
    j = 0
    while j < len(raw):
        if j + 1 < len(raw) and raw[j + 1][0] - raw[j][0] < 2:
            merged.append((raw[j][1], raw[j + 1][1]))
            j += 2
            continue
        boundaries.append(raw[j][1])
        j += 1

    edges = [float(mus[0])] + boundaries + [float(mus[-1])]
    state = bool(infl[0])
    intervals = []
    for a, b in pairwise(edges):
        if state:
            intervals.append((a, b))
        state = not state
    open_end = bool(infl[-1])

    mu_bar_low = intervals[0][1] if intervals and intervals[0][0] == mus[0] and boundaries else None
    mu_bar_high = boundaries[-1] if boundaries and not open_end else None
    mu_I = mu_indifferent(p, pair) if compute_mu_I else None
    return RegionReport(
        p=p, mu_I=mu_I, intervals=intervals, boundaries=boundaries,
        mu_bar_low=mu_bar_low, mu_bar_high=mu_bar_high, grid_step=grid_step,
        grid_hi=float(mus[-1]), open_end=open_end, merged=merged,
    )


PROFILE_COLUMNS = ("mu", "beta", "matching_total", "matching_h", "matching_l",
                   "reservation", "receiver_payoff", "influential")


@dataclass(frozen=True)
class ProfileRow:
    mu: float
    beta: float | None
    matching_total: float | None
    matching_h: float | None
    matching_l: float | None
    reservation: float
    receiver_payoff: float | None
    influential: bool | None
    error: str | None = None


@dataclass(frozen=True)
class PayoffProfile:
    """Equilibrium payoffs along a ``mu`` grid.

    ``dip_location`` is the minimizing ``mu`` when receiver payoff falls
    and then rises at grid resolution, otherwise ``None``.
    """

    rows: list
    dip_location: float | None

    def to_dict(self):
        return {"rows": [r.__dict__ for r in self.rows], "dip_location": self.dip_location}

    def to_csv(self, fmt=None):
        fmt = fmt or format_real
        has_err = any(r.error for r in self.rows)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PROFILE_COLUMNS + (("error",) if has_err else ()))
        for r in self.rows:
            vals = [fmt(getattr(r, c)) for c in PROFILE_COLUMNS]
            if has_err:
                vals.append(r.error or "")
            w.writerow(vals)
        return buf.getvalue()


def _row(mu, sol):
    if isinstance(sol, Exception):
        return ProfileRow(mu, None, None, None, None, mu, None, None,
                          error=f"{type(sol).__name__}: {sol}")
    if not sol.exists:
        return ProfileRow(mu, None, None, None, None, mu, mu, False,
                          error="NoEquilibrium: crossing beliefs not ordered")
    return ProfileRow(mu, sol.beta, sol.matching_total, sol.matching_h, sol.matching_l,
                      mu, sol.receiver_payoff, sol.influential)


def _find_dip(mus, pay):
    if len(pay) < 3 or any(v is None for v in pay):
        return None
    pay = np.asarray(pay, dtype=float)
    i = int(np.argmin(pay))
    if i == 0 or i == len(pay) - 1:
        return None
    d = np.diff(pay)
    if np.all(d[:i] <= 1e-12) and np.all(d[i:] >= -1e-12):
        return float(mus[i])
    return None


def payoff_profile(p, pair, mus, threads=1):
    """Solve along ``mus`` and tabulate payoffs; failing rows carry an error."""
    mus = [float(m) for m in mus]
    for m in mus:
        if not (0.5 <= m < pair.mu_upper):
            raise DomainError(f"grid point {m} outside [1/2, {pair.mu_upper})")
    sols = _parallel(_solve_chunk, p, pair, mus, threads) if mus else []
    rows = [_row(m, s) for m, s in zip(mus, sols)]
    return PayoffProfile(rows, _find_dip(mus, [r.receiver_payoff for r in rows]))


def _fd(fun, x, h, lo, hi, what):
    """Central difference of ``fun`` at ``x``; one-sided within two steps of an edge."""
    if x - 2 * h >= lo and x + 2 * h <= hi:
        return (fun(x + h) - fun(x - h)) / (2 * h), False
    warnings.warn(f"{what}={x} is within two steps of the domain edge; "
                  "using a one-sided difference", RuntimeWarning, stacklevel=3)
    if x - 2 * h < lo:
        return (-3 * fun(x) + 4 * fun(x + h) - fun(x + 2 * h)) / (2 * h), True
    return (3 * fun(x) - 4 * fun(x - h) + fun(x - 2 * h)) / (2 * h), True


def _solved(xi):
    sol = solve_cutoff(xi)
    if not sol.exists:
        raise NoEquilibriumError(f"no informative equilibrium at mu={xi.mu}, p={xi.p}")
    return sol


@dataclass(frozen=True)
class MuDerivative:
    """Per-type derivative of matching payoffs in ``mu``.

    For each type ``d m_t/d mu = A_t + B_t + C * D_t`` with
    ``A_t = 1 - F(ell|t,1)``, ``B_t = -F(ell|t,0)``, ``C = d ell/d mu`` and
    ``D_t = (1-mu) f(ell|t,0) - mu f(ell|t,1)``.
    """

    derivative_h: float
    derivative_l: float
    term_c: float
    terms_h: tuple
    terms_l: tuple
    one_sided: bool


def d_matching_d_mu(xi, step=FD_STEP):
    sol = _solved(xi)
    ell, mu = sol.ell, xi.mu
    c, one_sided = _fd(lambda m: _solved(xi.with_mu(m)).ell, mu, step,
                       0.5, xi.pair.mu_upper - EDGE_GAP, "mu")
    out = {}
    for t in "hl":
        model = xi.pair[t]
        a = float(model.sf(ell, 1))
        b = -float(model.cdf(ell, 0))
        d = (1 - mu) * model.pdf(ell, 0) - mu * model.pdf(ell, 1)
        out[t] = (a, b, c, d)
    total = {t: v[0] + v[1] + v[2] * v[3] for t, v in out.items()}
    return MuDerivative(total["h"], total["l"], c, out["h"], out["l"], one_sided)


@dataclass(frozen=True)
class PDerivative:
    """Derivative of the total matching payoff in ``p``.

    ``value = term_a + term_b``: ``term_a`` is the high-minus-low matching
    gap and ``term_b = dl_dp * E_p[(1-mu) f(ell|t,0) - mu f(ell|t,1)]``.
    """

    value: float
    term_a: float
    term_b: float
    term_b_factor: float
    dl_dp: float
    one_sided: bool


def d_matching_d_p(xi, step=FD_STEP):
    sol = _solved(xi)
    ell, mu, p = sol.ell, xi.mu, xi.p
    dl, one_sided = _fd(lambda q: _solved(xi.with_p(q)).ell, p, step,
                        EDGE_GAP, 1 - EDGE_GAP, "p")
    term_a = sol.matching_h - sol.matching_l
    fac = 0.0
    for t, w in (("h", p), ("l", 1 - p)):
        m = xi.pair[t]
        fac += w * ((1 - mu) * m.pdf(ell, 0) - mu * m.pdf(ell, 1))
    term_b = dl * fac
    return PDerivative(term_a + term_b, term_a, term_b, float(fac), dl, one_sided)


@dataclass(frozen=True)
class NestingReport:
    """Containment of influential sets along an ascending list of ``p``.

    ``violations`` lists ``(p, p_next, lo, hi)`` for intervals of ``p`` not
    covered under ``p_next``; ``witnesses`` lists ``(p, p_next, mu)`` for
    endpoints of ``p_next``'s set that reach strictly beyond ``p``'s.
    """

    nested: bool
    violations: list
    witnesses: list
    reports: list
    tolerance: float

    def to_dict(self):
        return {
            "nested": self.nested,
            "violations": [list(v) for v in self.violations],
            "witnesses": [list(w) for w in self.witnesses],
            "reports": [r.to_dict() for r in self.reports],
            "tolerance": self.tolerance,
        }


def region_nesting(p_list, pair, grid_step=0.002, threshold=0.05, threads=1, reports=None):
    """Check that influential sets grow with ``p`` for a near-perfect high type."""
    p_list = list(p_list)
    if any(b <= a for a, b in pairwise(p_list)):
        raise DomainError("p_list must be strictly ascending")
    dist = distance_to_perfect(pair.high)
    if not dist < threshold:
        raise DomainError(
            f"high type is {dist:.4g} from the perfect experiment; threshold {threshold}"
        )
    if reports is None:
        reports = [influential_intervals(p, pair, grid_step, threads, compute_mu_I=False)
                   for p in p_list]
    tol = grid_step + 2 * REFINE_TOL
    violations, witnesses = [], []
    for r0, r1 in pairwise(reports):
        for a, b in r0.intervals:
            if not any(c <= a + tol and b - tol <= d for c, d in r1.intervals):
                violations.append((r0.p, r1.p, a, b))
        for c, d in r1.intervals:
            for e in (c, d):
                if not r0.contains(e, slack=tol):
                    witnesses.append((r0.p, r1.p, e))
    return NestingReport(not violations, violations, witnesses, reports, tol)
