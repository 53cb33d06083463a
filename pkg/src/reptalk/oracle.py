"""Independent checks of a solved cutoff.

Nothing here evaluates the closed-form belief CDFs used by the solver.
:func:`simulate` plays the game by Monte Carlo. :func:`verify_equilibrium`
rebuilds reputations by quadrature of the signal densities and checks
best responses on a grid.

Random numbers come from numpy's PCG64.  Draws are split into fixed blocks
of ``BLOCK`` consecutive indices; block ``j`` uses the stream
``SeedSequence(seed, spawn_key=(j,))``.  Counts are integers, so merged
results do not depend on how blocks are spread over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .beliefs import belief_of_likelihood, likelihood_of_belief
from .errors import ReptalkError
from .experiments import from_unit, quad_cdf, to_unit

__all__ = [
    "McEstimate",
    "OracleReport",
    "quadrature_reputations",
    "run_oracle",
    "sample_signal",
    "sample_signals",
    "simulate",
    "verify_equilibrium",
]

BLOCK = 1 << 16
SAMPLE_TOL = 1e-10
SIGN_EXCLUSION = 1e-4
Z95 = 1.96


def sample_signals(model, s, u):
    """Inverse-CDF transform of uniforms ``u`` by vectorized bisection on ``ell/(1+ell)``."""
    u = np.asarray(u, dtype=float)
    lo = np.full(u.shape, to_unit(model.support.lo))
    hi = np.full(u.shape, to_unit(model.support.hi))
    n_iter = math.ceil(math.log2(max(hi.max(initial=1.0) - lo.min(initial=0.0), 1e-300)
                                 / SAMPLE_TOL)) + 1
    for _ in range(max(n_iter, 1)):
        mid = 0.5 * (lo + hi)
        below = model.cdf(from_unit(mid), s) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return from_unit(0.5 * (lo + hi))


def sample_signal(model, s, rng):
    """One draw from ``model`` in state ``s`` using generator ``rng``."""
    return float(sample_signals(model, s, rng.random()))


def block_rng(seed, block):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with a normal-approximation 95% half width."""

    mean: float
    half_width_95: float
    n: int
    seed: int

    def agrees(self, value, k=3.0):
        return abs(self.mean - value) <= k * self.half_width_95

    def to_dict(self):
        return {"mean": self.mean, "half_width_95": self.half_width_95,
                "n": self.n, "seed": self.seed}


def _proportion(hits, n, seed):
    if n == 0:
        return None
    m = hits / n
    sd = math.sqrt(m * (1.0 - m) * n / (n - 1)) if n > 1 else 0.0
    return McEstimate(m, Z95 * sd / math.sqrt(n), int(n), seed)


def _simulate_blocks(args):
    mu, p, pair, beta, n, seed, blocks = args
    counts = np.zeros((2, 2, 2), dtype=np.int64)  # [type high?, state, report]
    for j in blocks:
        m = min(BLOCK, n - j * BLOCK)
        rng = block_rng(seed, j)
        high = rng.random(m) < p
        state = (rng.random(m) < mu).astype(np.int64)
        u = rng.random(m)
        ell = np.empty(m)
        for t_high, model in ((True, pair.high), (False, pair.low)):
            for s in (0, 1):
                idx = (high == t_high) & (state == s)
                if idx.any():
                    ell[idx] = sample_signals(model, s, u[idx])
        report = (belief_of_likelihood(mu, ell) > beta).astype(np.int64)
        np.add.at(counts, (high.astype(np.int64), state, report), 1)
    return counts


@dataclass(frozen=True)
class OracleReport:
    """Monte Carlo and best-response checks for one cutoff.

    Reputation keys are ``r_ms`` for report ``m`` and state ``s``; a
    ``None`` estimate marks a cell no draw reached.  ``agreement_z`` holds
    ``|estimate - reference| / half_width`` per quantity.
    """

    beta: float
    seed: int | None = None
    n: int | None = None
    reputations_mc: dict | None = None
    matching_mc: McEstimate | None = None
    receiver_payoff_mc: float | None = None
    agreement_z: dict | None = None
    max_abs_gap_to_analytic: float | None = None
    incentive_sign_ok: bool | None = None
    receiver_best_reply_ok: bool | None = None
    diagnostics: list = field(default_factory=list)

    @property
    def absent_cells(self):
        return [k for k, v in (self.reputations_mc or {}).items() if v is None]

    def mc_agrees(self, k=3.0):
        """True when every present estimate lies within ``k`` half widths of its reference."""
        if not self.agreement_z:
            return False
        return all(z <= k for z in self.agreement_z.values())

    @property
    def passed(self):
        flags = [self.incentive_sign_ok, self.receiver_best_reply_ok]
        if self.agreement_z is not None:
            flags.append(self.mc_agrees())
        return all(f is True for f in flags)

    def merge(self, other):
        d = dict(self.__dict__)
        for k, v in other.__dict__.items():
            if k == "diagnostics":
                d[k] = self.diagnostics + other.diagnostics
            elif v is not None:
                d[k] = v
        return OracleReport(**d)

    def to_dict(self):
        reps = None
        if self.reputations_mc is not None:
            reps = {k: (v.to_dict() if v else None) for k, v in self.reputations_mc.items()}
        return {
            "beta": self.beta,
            "seed": self.seed,
            "n": self.n,
            "reputations_mc": reps,
            "matching_mc": self.matching_mc.to_dict() if self.matching_mc else None,
            "receiver_payoff_mc": self.receiver_payoff_mc,
            "agreement_z": self.agreement_z,
            "max_abs_gap_to_analytic": self.max_abs_gap_to_analytic,
            "incentive_sign_ok": self.incentive_sign_ok,
            "receiver_best_reply_ok": self.receiver_best_reply_ok,
            "passed": self.passed,
            "diagnostics": list(self.diagnostics),
        }


def _z(est, ref):
    diff = abs(est.mean - ref)
    if est.half_width_95 > 0:
        return diff / est.half_width_95
    return 0.0 if diff == 0 else math.inf


def simulate(xi, beta, n=1_000_000, seed=0, reference=None, threads=1):
    """Play the game ``n`` times with every sender using cutoff ``beta``.

    ``reference`` maps ``r_00 .. r_11`` and ``matching`` to values the
    estimates are compared with; by default the quadrature values of
    :func:`quadrature_reputations` are used.
    """
    if n < 10_000:
        raise ValueError(f"n must be at least 1e4, got {n}")
    n_blocks = -(-n // BLOCK)
    args = [(xi.mu, xi.p, xi.pair, beta, n, seed, range(j, n_blocks, threads))
            for j in range(max(threads, 1))]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_simulate_blocks, args))
    else:
        parts = [_simulate_blocks(args[0])]
    counts = sum(parts)

    reps = {}
    for m in (0, 1):
        for s in (0, 1):
            reps[f"r_{m}{s}"] = _proportion(int(counts[1, s, m]), int(counts[:, s, m].sum()), seed)
    matched = int(counts[:, 0, 0].sum() + counts[:, 1, 1].sum())
    matching = _proportion(matched, n, seed)
    diagnostics = [f"cell {k} has no draws" for k, v in reps.items() if v is None]

    if reference is None:
        try:
            reference = quadrature_reputations(xi, beta)
        except ZeroDivisionError:
            reference = {}
            diagnostics.append("reference values undefined at this cutoff")
    z, gaps = {}, []
    for k, est in list(reps.items()) + [("matching", matching)]:
        if est is None or reference.get(k) is None:
            continue
        z[k] = _z(est, reference[k])
        gaps.append(abs(est.mean - reference[k]))
    return OracleReport(
        beta=beta, seed=seed, n=n, reputations_mc=reps, matching_mc=matching,
        receiver_payoff_mc=max(matching.mean, xi.mu), agreement_z=z,
        max_abs_gap_to_analytic=max(gaps) if gaps else None, diagnostics=diagnostics,
    )


def quadrature_reputations(xi, beta):
    """Reputations, report posteriors and matching payoff from integrated densities.

    Raises ``ZeroDivisionError`` when a (report, state) cell has zero mass.
    """
    ell = float(likelihood_of_belief(xi.mu, beta))
    H = {(t, s): quad_cdf(xi.pair[t], ell, s) for t in "hl" for s in (0, 1)}
    p, mu = xi.p, xi.mu
    out = {}
    for s in (0, 1):
        low = p * H["h", s] + (1 - p) * H["l", s]
        high = p * (1 - H["h", s]) + (1 - p) * (1 - H["l", s])
        out[f"r_0{s}"] = p * H["h", s] / low
        out[f"r_1{s}"] = p * (1 - H["h", s]) / high
    e = {s: p * H["h", s] + (1 - p) * H["l", s] for s in (0, 1)}
    out["given_report_1"] = mu * (1 - e[1]) / (mu * (1 - e[1]) + (1 - mu) * (1 - e[0]))
    out["given_report_0"] = mu * e[1] / (mu * e[1] + (1 - mu) * e[0])
    out["matching"] = mu * (1 - e[1]) + (1 - mu) * e[0]
    return out


def verify_equilibrium(xi, beta, grid_size=512):
    """Check that ``beta`` is a best response to itself on a belief grid.

    The sender's gain from reporting 1 at belief ``b`` must be negative at
    every grid point more than ``1e-4`` below ``beta`` and positive at every
    point more than ``1e-4`` above it.  The grid spans the high type's
    belief range.
    """
    from .equilibrium import matching_payoffs, reputations

    diagnostics = []
    lo_h = belief_of_likelihood(xi.mu, xi.pair.high.support.lo)
    hi_h = belief_of_likelihood(xi.mu, xi.pair.high.support.hi)
    try:
        q = quadrature_reputations(xi, beta)
    except ZeroDivisionError:
        diagnostics.append(f"cutoff {beta} leaves a (report, state) cell with zero mass")
        return OracleReport(beta=beta, incentive_sign_ok=False, receiver_best_reply_ok=False,
                            diagnostics=diagnostics)

    for s in (0, 1):
        correct, wrong = q[f"r_{s}{s}"], q[f"r_{1 - s}{s}"]
        if not correct - wrong > 1e-12:
            diagnostics.append(
                f"orientation degenerate in state {s}: r_{s}{s}={correct:.6g}, "
                f"r_{1 - s}{s}={wrong:.6g}"
            )

    grid = np.linspace(lo_h, hi_h, grid_size + 2)[1:-1]
    gain = (grid * q["r_11"] + (1 - grid) * q["r_10"]) - (grid * q["r_01"] + (1 - grid) * q["r_00"])
    below = grid < beta - SIGN_EXCLUSION
    above = grid > beta + SIGN_EXCLUSION
    bad_lo = np.flatnonzero(below & ~(gain < 0))
    bad_hi = np.flatnonzero(above & ~(gain > 0))
    sign_ok = bad_lo.size == 0 and bad_hi.size == 0
    if not sign_ok:
        where = grid[np.concatenate([bad_lo, bad_hi])]
        diagnostics.append(
            f"best-response sign pattern broken at {where.size} grid points "
            f"in [{where.min():.6g}, {where.max():.6g}]"
        )

    reply_ok = q["given_report_1"] > 0.5
    if not reply_ok:
        diagnostics.append(f"posterior after report 1 is {q['given_report_1']:.6g} <= 1/2")
    analytic_margin = matching_payoffs(xi, beta).total - xi.mu
    oracle_margin = q["matching"] - xi.mu
    if (analytic_margin > 0) != (oracle_margin > 0) and abs(oracle_margin) > 1e-8:
        reply_ok = False
        diagnostics.append(
            f"influentialness disagrees: analytic margin {analytic_margin:.3g}, "
            f"quadrature margin {oracle_margin:.3g}"
        )

    gap = None
    try:
        rep = reputations(xi, beta)
        gap = max(abs(q[f"r_{m}{s}"] - rep[m, s]) for m in (0, 1) for s in (0, 1))
        gap = max(gap, abs(q["matching"] - (analytic_margin + xi.mu)))
    except ReptalkError as exc:  # analytic side may reject a degenerate cutoff
        diagnostics.append(f"analytic comparison unavailable: {exc}")
    return OracleReport(
        beta=beta, incentive_sign_ok=bool(sign_ok), receiver_best_reply_ok=bool(reply_ok),
        max_abs_gap_to_analytic=gap, diagnostics=diagnostics,
    )


def run_oracle(xi, beta, n=1_000_000, seed=0, grid_size=512, reference=None, threads=1):
    """:func:`simulate` followed by :func:`verify_equilibrium`, merged."""
    mc = simulate(xi, beta, n=n, seed=seed, reference=reference, threads=threads)
    vr = verify_equilibrium(xi, beta, grid_size=grid_size)
    merged = mc.merge(vr)
    # keep the Monte Carlo gap; the quadrature gap is reported in diagnostics
    if vr.max_abs_gap_to_analytic is not None:
        note = f"quadrature vs closed form max gap {vr.max_abs_gap_to_analytic:.3g}"
        merged = replace(merged, max_abs_gap_to_analytic=mc.max_abs_gap_to_analytic,
                         diagnostics=[*merged.diagnostics, note])
    return merged
