"""Signal experiments labeled on the likelihood-ratio scale.

A signal ``ell`` is its own likelihood ratio ``f(ell|1) / f(ell|0)``, so every
model here satisfies ``pdf(ell, 1) == ell * pdf(ell, 0)`` on the interior of
its support.  Three families are provided:

* :class:`MultiplicativeLinear` -- bounded support, closed-form CDFs.
* :class:`SimpleHyperexponential` -- support ``[0, inf]``; approaches the
  perfect experiment as ``k`` grows.
* :class:`TabulatedCdf` -- piecewise-linear CDFs read from a table.

Models are immutable and every function in this module is pure.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, special

from ._roots import bisect
from .errors import DomainError, TableFormatError

__all__ = [
    "AssumptionReport",
    "ExperimentModel",
    "ExperimentPair",
    "MultiplicativeLinear",
    "SimpleHyperexponential",
    "SupportInterval",
    "SymmetryReport",
    "TabulatedCdf",
    "cdf",
    "check_symmetry",
    "distance_to_perfect",
    "parse_experiment",
    "pdf",
    "quad_cdf",
    "sf",
    "validate_assumptions",
]

STATES = (0, 1)


def _check_state(s):
    if s not in STATES:
        raise DomainError(f"state must be 0 or 1, got {s!r}")


def _as_array(ell):
    arr = np.asarray(ell, dtype=float)
    return arr, arr.ndim == 0


def _ret(arr, scalar):
    return float(arr) if scalar else arr


def to_unit(ell):
    """Map ``ell`` in ``[0, inf]`` to ``u = ell / (1 + ell)`` in ``[0, 1]``."""
    arr, scalar = _as_array(ell)
    with np.errstate(invalid="ignore"):
        u = np.where(np.isinf(arr), 1.0, arr / (1.0 + arr))
    return _ret(u, scalar)


def from_unit(u):
    """Inverse of :func:`to_unit`; ``u == 1`` maps to ``inf``."""
    arr, scalar = _as_array(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        ell = np.where(arr >= 1.0, np.inf, arr / (1.0 - arr))
    return _ret(ell, scalar)


@dataclass(frozen=True)
class SupportInterval:
    """Closed support ``[lo, hi]`` of an experiment; ``hi`` may be ``inf``."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo >= 0.0):
            raise DomainError(f"support lower end must be >= 0, got {self.lo}")
        if not (self.lo < self.hi):
            raise DomainError(f"support requires lo < hi, got [{self.lo}, {self.hi}]")

    def contains(self, ell):
        arr = np.asarray(ell, dtype=float)
        return (arr >= self.lo) & (arr <= self.hi)


class ExperimentModel:
    """Common interface of a pair of state-conditional signal distributions."""

    family = "abstract"

    @property
    def support(self) -> SupportInterval:
        raise NotImplementedError

    def _pdf(self, ell, s):
        raise NotImplementedError

    def _cdf(self, ell, s):
        raise NotImplementedError

    def _sf(self, ell, s):
        return 1.0 - self._cdf(ell, s)

    def pdf(self, ell, s):
        """Density at ``ell`` in state ``s``; ``ell`` must lie in the support."""
        _check_state(s)
        arr, scalar = _as_array(ell)
        if not np.all(self.support.contains(arr)):
            bad = arr[~self.support.contains(arr)] if arr.ndim else arr
            raise DomainError(
                f"likelihood ratio {np.ravel(bad)[0]!r} outside support "
                f"[{self.support.lo}, {self.support.hi}]"
            )
        return _ret(self._pdf(arr, s), scalar)

    def cdf(self, ell, s):
        """Probability that the signal is ``<= ell`` in state ``s``."""
        _check_state(s)
        arr, scalar = _as_array(ell)
        out = self._cdf(arr, s)
        return _ret(np.clip(out, 0.0, 1.0), scalar)

    def sf(self, ell, s):
        """Survival function ``1 - cdf`` computed without cancellation."""
        _check_state(s)
        arr, scalar = _as_array(ell)
        out = self._sf(arr, s)
        return _ret(np.clip(out, 0.0, 1.0), scalar)

    def describe(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class MultiplicativeLinear(ExperimentModel):
    """Mixture of an informative linear density and an uninformative one.

    ``x`` is the weight on the informative component; the likelihood-ratio
    density is ``((1 - s) + s * ell) * 2 / (x * (1 + ell)**3)``.
    """

    x: float
    family = "mle"

    def __post_init__(self):
        if not (0.0 < self.x <= 1.0):
            raise DomainError(f"MultiplicativeLinear requires 0 < x <= 1, got {self.x}")

    @property
    def support(self):
        x = self.x
        hi = math.inf if x == 1.0 else (1.0 + x) / (1.0 - x)
        return SupportInterval((1.0 - x) / (1.0 + x), hi)

    def _z(self, ell):
        x = self.x
        with np.errstate(invalid="ignore", divide="ignore"):
            z = ((1.0 + x) * ell - (1.0 - x)) / (2.0 * x * (1.0 + ell))
        return np.where(np.isinf(ell), 1.0, z)

    def _pdf(self, ell, s):
        with np.errstate(invalid="ignore", over="ignore"):
            base = 2.0 / (self.x * (1.0 + ell) ** 3)
            out = ((1 - s) + s * ell) * base
        return np.where(np.isinf(ell), 0.0, out)

    def _cdf(self, ell, s):
        x = self.x
        sup = self.support
        z = np.clip(self._z(ell), 0.0, 1.0)
        if s == 0:
            val = (1.0 + x) * z - x * z * z
        else:
            val = (1.0 - x) * z + x * z * z
        val = np.where(ell <= sup.lo, 0.0, val)
        return np.where(ell >= sup.hi, 1.0, val)

    def describe(self):
        return f"mle:{self.x:g}"


@dataclass(frozen=True)
class SimpleHyperexponential(ExperimentModel):
    """Two-component exponential mixture with rates ``k`` and ``k/(k^2-k+1)``.

    Weights are ``1 - 1/k`` and ``1/k``; in state 1 the density is tilted by
    ``ell``.  CDFs use regularized incomplete gamma functions, which stay
    accurate when ``exp(-k * ell)`` underflows.
    """

    k: int
    family = "hyper"

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise DomainError(f"SimpleHyperexponential requires integer k >= 1, got {self.k}")

    @property
    def support(self):
        return SupportInterval(0.0, math.inf)

    @property
    def slow_rate(self):
        k = float(self.k)
        return k / (k * k - k + 1.0)

    def _mixture_density(self, ell):
        k, b = float(self.k), self.slow_rate
        if self.k == 1:
            return np.exp(-ell)
        if self.k >= 100:
            with np.errstate(over="ignore", invalid="ignore"):
                logd = np.logaddexp(math.log(k - 1.0) - k * ell, math.log(b / k) - b * ell)
            return np.exp(logd)
        return (k - 1.0) * np.exp(-k * ell) + (b / k) * np.exp(-b * ell)

    def _pdf(self, ell, s):
        finite = np.isfinite(ell)
        safe = np.where(finite, ell, 0.0)
        out = ((1 - s) + s * safe) * self._mixture_density(safe)
        return np.where(finite, out, 0.0)

    def _weights(self, s):
        k, b = float(self.k), self.slow_rate
        if s == 0:
            return (1.0 - 1.0 / k), 1.0 / k
        # length-biased components carry mass 1/rate each
        return (1.0 - 1.0 / k) / k, 1.0 / (k * b)

    def _cdf(self, ell, s):
        k, b = float(self.k), self.slow_rate
        w_fast, w_slow = self._weights(s)
        a = 1.0 + s
        e = np.maximum(ell, 0.0)
        return w_fast * special.gammainc(a, k * e) + w_slow * special.gammainc(a, b * e)

    def _sf(self, ell, s):
        k, b = float(self.k), self.slow_rate
        w_fast, w_slow = self._weights(s)
        a = 1.0 + s
        e = np.maximum(ell, 0.0)
        return w_fast * special.gammaincc(a, k * e) + w_slow * special.gammaincc(a, b * e)

    def describe(self):
        return f"hyper:{self.k}"


@dataclass(frozen=True, eq=False)
class TabulatedCdf(ExperimentModel):
    """Experiment given by CDF values on a grid, interpolated linearly.

    The density is piecewise constant.  With ``strict=True`` (the default)
    the table must describe a continuous experiment: finite, strictly
    increasing grid; both CDFs strictly increasing, 0 at the first row and
    1 at the last; nondecreasing ratio of CDF increments (MLRP).  Tables
    built with ``strict=False`` may end in an ``inf`` row, which then
    carries an atom at infinity.
    """

    ell: np.ndarray
    f0: np.ndarray
    f1: np.ndarray
    strict: bool = True
    source: str = field(default="table", compare=False)
    family = "table"

    def __post_init__(self):
        for name in ("ell", "f0", "f1"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.ell.shape == self.f0.shape == self.f1.shape) or self.ell.ndim != 1:
            raise TableFormatError("ell, F0 and F1 must be 1-d arrays of equal length")
        if len(self.ell) < 2:
            raise TableFormatError("at least two rows are required")
        self._validate()

    def _validate(self):
        ell, f0, f1 = self.ell, self.f0, self.f1
        for i in range(len(ell)):
            if np.isnan(ell[i]) or ell[i] < 0:
                raise TableFormatError(f"ell must be >= 0, got {ell[i]}", row=i + 1)
            if i and not ell[i] > ell[i - 1]:
                raise TableFormatError("ell must be strictly increasing", row=i + 1)
            for name, col in (("F0", f0), ("F1", f1)):
                if not (0.0 <= col[i] <= 1.0):
                    raise TableFormatError(f"{name} must lie in [0, 1], got {col[i]}", row=i + 1)
                if i and col[i] < col[i - 1]:
                    raise TableFormatError(f"{name} decreases", row=i + 1)
        if not self.strict:
            return
        if np.isinf(ell[-1]):
            raise TableFormatError("strict tables need a finite last row", row=len(ell))
        if f0[0] != 0.0 or f1[0] != 0.0:
            raise TableFormatError("F0 and F1 must be 0 at the first row", row=1)
        if f0[-1] != 1.0 or f1[-1] != 1.0:
            raise TableFormatError("F0 and F1 must be 1 at the last row", row=len(ell))
        d0, d1 = np.diff(f0), np.diff(f1)
        for i in range(len(d0)):
            if d0[i] <= 0 or d1[i] <= 0:
                raise TableFormatError("F0 and F1 must be strictly increasing", row=i + 2)
        ratio = d1 / d0
        for i in range(1, len(ratio)):
            if ratio[i] < ratio[i - 1] * (1.0 - 1e-12):
                raise TableFormatError(
                    "likelihood ratio of increments decreases (MLRP violated)", row=i + 2
                )

    @classmethod
    def from_rows(cls, rows, strict=True, source="table"):
        rows = list(rows)
        ell = [r[0] for r in rows]
        f0 = [r[1] for r in rows]
        f1 = [r[2] for r in rows]
        return cls(np.asarray(ell, float), np.asarray(f0, float), np.asarray(f1, float),
                   strict=strict, source=source)

    @classmethod
    def from_csv(cls, path, strict=True):
        """Read a table with header ``ell,F0,F1``.

        Row numbers in error messages count data rows from 1.
        """
        path = Path(path)
        rows = []
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise TableFormatError("empty file") from None
            if [h.strip() for h in header] != ["ell", "F0", "F1"]:
                raise TableFormatError(f"header must be 'ell,F0,F1', got {','.join(header)!r}")
            for i, rec in enumerate(reader, start=1):
                if not rec or all(not c.strip() for c in rec):
                    continue
                if len(rec) != 3:
                    raise TableFormatError(f"expected 3 fields, got {len(rec)}", row=i)
                try:
                    rows.append(tuple(float(c) for c in rec))
                except ValueError:
                    raise TableFormatError(f"non-numeric field in {rec!r}", row=i) from None
        return cls.from_rows(rows, strict=strict, source=str(path))

    @classmethod
    def from_model(cls, model, n=401):
        """Tabulate a parametric model on a grid symmetric under ``ell -> 1/ell``.

        The model must have bounded support.
        """
        sup = model.support
        if math.isinf(sup.hi) or sup.lo <= 0:
            raise DomainError("from_model needs a support bounded away from 0 and inf")
        grid = np.geomspace(sup.lo, sup.hi, n)
        grid[0], grid[-1] = sup.lo, sup.hi
        return cls(grid, model.cdf(grid, 0), model.cdf(grid, 1), source=model.describe())

    @classmethod
    def perfect(cls):
        """The fully revealing experiment: atoms at 0 (state 0) and inf (state 1)."""
        return cls.from_rows([(0.0, 1.0, 0.0), (1.0, 1.0, 0.0), (math.inf, 1.0, 1.0)],
                             strict=False, source="perfect")

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ell", "F0", "F1"])
            for row in zip(self.ell, self.f0, self.f1):
                w.writerow([repr(float(v)) for v in row])

    @property
    def support(self):
        return SupportInterval(float(self.ell[0]), float(self.ell[-1]))

    def _finite(self):
        mask = np.isfinite(self.ell)
        return self.ell[mask], self.f0[mask], self.f1[mask]

    def _cdf(self, ell, s):
        grid, f0, f1 = self._finite()
        col = f0 if s == 0 else f1
        out = np.interp(ell, grid, col, left=0.0, right=col[-1])
        out = np.where(ell < self.ell[0], 0.0, out)
        top = self.f0[-1] if s == 0 else self.f1[-1]
        return np.where(ell >= self.ell[-1], top, out)

    def _pdf(self, ell, s):
        grid, f0, f1 = self._finite()
        col = f0 if s == 0 else f1
        dens = np.diff(col) / np.diff(grid)
        idx = np.clip(np.searchsorted(grid, ell, side="right") - 1, 0, len(dens) - 1)
        out = dens[idx]
        return np.where(ell > grid[-1], 0.0, out)

    def describe(self):
        return f"table:{self.source}"


@dataclass(frozen=True)
class ExperimentPair:
    """High-type and low-type experiments."""

    high: ExperimentModel
    low: ExperimentModel

    def __getitem__(self, t):
        if t == "h":
            return self.high
        if t == "l":
            return self.low
        raise KeyError(t)

    @property
    def supports_nested(self) -> bool:
        h, l = self.high.support, self.low.support
        return h.lo < l.lo and l.hi < h.hi

    @property
    def mu_upper(self) -> float:
        """Largest admissible prior (exclusive): ``1 / (1 + lo_h)``."""
        return 1.0 / (1.0 + self.high.support.lo)

    def describe(self):
        return f"{self.high.describe()}/{self.low.describe()}"


def pdf(model, ell, s):
    return model.pdf(ell, s)


def cdf(model, ell, s):
    return model.cdf(ell, s)


def sf(model, ell, s):
    return model.sf(ell, s)


def quad_cdf(model, ell, s, epsabs=1e-10):
    """CDF by adaptive quadrature of the density on the ``u = ell/(1+ell)`` scale.

    Independent of the closed forms; used as a cross-check.
    """
    sup = model.support
    if ell <= sup.lo:
        return 0.0
    top = min(ell, sup.hi)
    u0, u1 = to_unit(sup.lo), to_unit(top)

    def integrand(u):
        if u >= 1.0:
            return 0.0
        e = u / (1.0 - u)
        return model.pdf(min(max(e, sup.lo), sup.hi), s) / (1.0 - u) ** 2

    points = None
    if isinstance(model, SimpleHyperexponential):
        pts = [to_unit(c / model.k) for c in (1.0, 5.0, 20.0)]
        pts += [to_unit(c / model.slow_rate) for c in (0.5, 1.0, 3.0)]
        points = [p for p in pts if u0 < p < u1] or None
    val, _ = integrate.quad(integrand, u0, u1, epsabs=epsabs, epsrel=1e-10,
                            limit=400, points=points)
    return float(min(max(val, 0.0), 1.0))


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of the three maintained assumptions on an experiment pair.

    ``part_b_margin`` is the smallest of the four hazard-rate gaps (low type
    minus high type) over the check grid; ``part_b_worst`` names where it
    occurred.
    """

    mu: float
    part_a: bool
    part_b: bool
    part_b_margin: float
    part_b_worst_ell: float
    part_b_worst_gap: str
    part_c: bool
    part_c_bound: float
    grid_size: int

    @property
    def overall(self) -> bool:
        return self.part_a and self.part_b and self.part_c

    def to_dict(self):
        return {
            "mu": self.mu,
            "part_a": self.part_a,
            "part_b": self.part_b,
            "part_b_margin": self.part_b_margin,
            "part_b_worst_ell": self.part_b_worst_ell,
            "part_b_worst_gap": self.part_b_worst_gap,
            "part_c": self.part_c,
            "part_c_bound": self.part_c_bound,
            "grid_size": self.grid_size,
            "overall": self.overall,
        }


def hazard_gaps(pair, grid):
    """Low-minus-high reverse-hazard and hazard rates, per state, on ``grid``."""
    gaps = {}
    with np.errstate(divide="ignore", invalid="ignore"):
        for s in STATES:
            rates = {}
            for t in ("h", "l"):
                m = pair[t]
                f = m.pdf(grid, s)
                rates[t] = (f / m.cdf(grid, s), f / m.sf(grid, s))
            gaps[f"reverse_hazard_s{s}"] = rates["l"][0] - rates["h"][0]
            gaps[f"hazard_s{s}"] = rates["l"][1] - rates["h"][1]
    return gaps


def validate_assumptions(pair, mu, grid_size=512):
    """Check supports nesting, hazard-rate dominance and the prior bound.

    Hazard-rate dominance is verified on a geometric grid strictly inside the
    low type's support; the bound on ``mu`` is ``mu < 1 / (1 + lo_h)``.
    Failures are reported, never raised.
    """
    if grid_size < 32:
        raise DomainError(f"grid_size must be >= 32, got {grid_size}")
    part_a = pair.supports_nested
    bound = pair.mu_upper
    part_c = bool(mu < bound)

    lo, hi = pair.low.support.lo, pair.low.support.hi
    margin, worst_ell, worst_gap = -math.inf, math.nan, "unchecked"
    if part_a and lo > 0 and math.isfinite(hi):
        grid = np.geomspace(lo, hi, grid_size + 2)[1:-1]
        margin = math.inf
        for name, gap in hazard_gaps(pair, grid).items():
            gap = np.where(np.isnan(gap), -np.inf, gap)
            i = int(np.argmin(gap))
            if gap[i] < margin:
                margin, worst_ell, worst_gap = float(gap[i]), float(grid[i]), name
    part_b = bool(margin > 0.0)
    return AssumptionReport(
        mu=float(mu), part_a=bool(part_a), part_b=part_b, part_b_margin=margin,
        part_b_worst_ell=worst_ell, part_b_worst_gap=worst_gap,
        part_c=part_c, part_c_bound=bound, grid_size=grid_size,
    )


@dataclass(frozen=True)
class SymmetryReport:
    symmetric: bool
    max_gap: float


def check_symmetry(model, tol=1e-9, grid_size=513):
    """Compare ``F(ell|0)`` with ``1 - F(1/ell|1)`` for ``ell`` in ``[lo, 1]``."""
    if not tol > 0:
        raise DomainError("tol must be positive")
    lo = model.support.lo
    if lo > 1.0:
        return SymmetryReport(False, math.inf)
    u = np.linspace(to_unit(lo), 0.5, grid_size)
    ell = from_unit(u)
    ell[0] = lo
    with np.errstate(divide="ignore"):
        inv = np.where(ell == 0.0, np.inf, 1.0 / np.where(ell == 0.0, 1.0, ell))
    gap = np.abs(model.cdf(ell, 0) - model.sf(inv, 1))
    max_gap = float(np.max(gap))
    return SymmetryReport(max_gap < tol, max_gap)


def distance_to_perfect(model, tol=1e-9):
    """Levy-Prokhorov distance to the perfect experiment, max over states.

    Computed on the compactified scale ``u = ell/(1+ell)`` where the perfect
    experiment is a point mass at 0 (state 0) or 1 (state 1).
    """

    def state0(eps):
        return 1.0 if model.cdf(from_unit(eps), 0) >= 1.0 - eps else -1.0

    def state1(eps):
        return 1.0 if model.cdf(from_unit(1.0 - eps), 1) <= eps else -1.0

    out = 0.0
    for pred in (state0, state1):
        if pred(0.0) > 0:
            continue
        out = max(out, bisect(pred, 0.0, 1.0, xtol=tol, flo=-1.0, fhi=pred(1.0)))
    return out


def parse_experiment(desc):
    """Build a model from ``mle:<x>``, ``hyper:<k>`` or ``table:<path>``.

    A mapping ``{"family": ..., "x"/"k"/"path": ...}`` is accepted too.
    """
    if isinstance(desc, ExperimentModel):
        return desc
    if isinstance(desc, dict):
        fam = desc.get("family")
        if fam == "mle":
            return MultiplicativeLinear(float(desc["x"]))
        if fam == "hyper":
            return SimpleHyperexponential(int(desc["k"]))
        if fam == "table":
            return TabulatedCdf.from_csv(desc["path"])
        raise DomainError(f"unknown experiment family {fam!r}")
    if not isinstance(desc, str) or ":" not in desc:
        raise DomainError(f"experiment descriptor must look like 'mle:0.9', got {desc!r}")
    fam, _, arg = desc.partition(":")
    try:
        if fam == "mle":
            return MultiplicativeLinear(float(arg))
        if fam == "hyper":
            k = float(arg)
            if k != int(k):
                raise DomainError(f"hyper needs an integer k, got {arg!r}")
            return SimpleHyperexponential(int(k))
    except ValueError as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"bad parameter in {desc!r}") from None
    if fam == "table":
        return TabulatedCdf.from_csv(arg)
    raise DomainError(f"unknown experiment family {fam!r}")
