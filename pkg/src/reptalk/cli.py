"""Command-line front end.

Configuration is one JSON object read from ``--config PATH`` (or ``-`` for
stdin); flags override its keys.  Exit codes: 0 ok, 1 configuration error,
2 assumption failure, 3 no informative equilibrium, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._format import format_real
from .beliefs import belief_cdf, crossing_beliefs
from .equilibrium import (
    InformationStructure,
    matching_payoffs,
    reputations,
    solve_cutoff,
)
from .errors import (
    DomainError,
    InternalConsistencyError,
    NoEquilibriumError,
    ReptalkError,
    SingleCrossingError,
    TableFormatError,
)
from .experiments import ExperimentPair, parse_experiment, validate_assumptions
from .oracle import run_oracle
from .regions import (
    PROFILE_COLUMNS,
    influential_intervals,
    payoff_profile,
    region_nesting,
)

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_NO_EQUILIBRIUM, EXIT_VERIFY = 0, 1, 2, 3, 4

FIG1_COLUMNS = ("beta", "H_h0", "H_h1", "H_l0", "H_l1")
FIG2_COLUMNS = ("mu", "matching_total", "reservation")
FIG1_POINTS = 400
DEFAULT_DRAWS = 1_000_000
DEFAULT_SEED = 12345

CONFIG_KEYS = {"mu", "p", "high", "low", "grid", "seed", "draws", "threads", "output",
               "format", "figure", "vary", "beta", "p_list"}


class ConfigError(Exception):
    """Malformed or incomplete configuration."""


@dataclass(frozen=True)
class Grid:
    lo: float
    hi: float
    step: float

    def points(self):
        if self.hi < self.lo:
            return np.empty(0)
        n = math.floor((self.hi - self.lo) / self.step + 1e-9) + 1
        return self.lo + self.step * np.arange(n)


@dataclass(frozen=True)
class RunConfig:
    mu: float | None
    p: float | None
    high: object
    low: object
    grid: Grid | None = None
    seed: int = DEFAULT_SEED
    draws: int = DEFAULT_DRAWS
    threads: int = 1
    output: str | None = None
    format: str | None = None
    figure: str | None = None
    vary: str = "mu"
    beta: float | None = None
    p_list: tuple | None = None

    @property
    def pair(self):
        return ExperimentPair(self.high, self.low)


def _parse_grid(value):
    if isinstance(value, dict):
        try:
            lo, hi, step = value["lo"], value["hi"], value["step"]
        except KeyError as exc:
            raise ConfigError(f"key 'grid': missing field {exc.args[0]!r}") from None
    elif isinstance(value, str):
        parts = value.split(":")
        if len(parts) != 3:
            raise ConfigError(f"key 'grid': expected lo:hi:step, got {value!r}")
        lo, hi, step = parts
    else:
        raise ConfigError(f"key 'grid': expected lo:hi:step or an object, got {value!r}")
    try:
        lo, hi, step = float(lo), float(hi), float(step)
    except (TypeError, ValueError):
        raise ConfigError(f"key 'grid': non-numeric field in {value!r}") from None
    if not step > 0:
        raise ConfigError("key 'grid': step must be positive")
    return Grid(lo, hi, step)


def _num(raw, key, kind=float):
    if raw is None:
        return None
    if isinstance(raw, bool):
        raise ConfigError(f"key {key!r}: expected a number, got {raw!r}")
    try:
        val = kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"key {key!r}: expected a number, got {raw!r}") from None
    if kind is int and isinstance(raw, float) and raw != val:
        raise ConfigError(f"key {key!r}: expected an integer, got {raw!r}")
    return val


def _load_config_file(path):
    if path == "-":
        text, name = sys.stdin.read(), "<stdin>"
    else:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        name = path
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{name}: top level must be a JSON object")
    unknown = sorted(set(doc) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{name}: unknown key {unknown[0]!r}")
    return doc


def _needs_mu(command, raw):
    if command == "regions":
        return False
    if command == "sweep":
        return raw.get("figure") == "fig1" or raw.get("vary") == "p"
    return True


def build_config(args):
    raw = _load_config_file(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    need_mu = _needs_mu(args.command, raw)
    for key in ("p", "high", "low") + (("mu",) if need_mu else ()):
        if raw.get(key) is None:
            raise ConfigError(f"missing required key {key!r}")
    models = {}
    for key in ("high", "low"):
        try:
            models[key] = parse_experiment(raw[key])
        except (DomainError, TableFormatError, KeyError, OSError) as exc:
            raise ConfigError(f"key {key!r}: {exc}") from None
    p_list = raw.get("p_list")
    if isinstance(p_list, str):
        p_list = [s for s in p_list.split(",") if s.strip()]
    if p_list is not None:
        p_list = tuple(_num(v, "p_list") for v in p_list)
    fmt = raw.get("format")
    if fmt not in (None, "json", "csv"):
        raise ConfigError(f"key 'format': expected json or csv, got {fmt!r}")
    figure = raw.get("figure")
    if figure not in (None, "fig1", "fig2"):
        raise ConfigError(f"key 'figure': expected fig1 or fig2, got {figure!r}")
    vary = raw.get("vary") or "mu"
    if vary not in ("mu", "p"):
        raise ConfigError(f"key 'vary': expected mu or p, got {vary!r}")
    threads = _num(raw.get("threads"), "threads", int)
    draws = _num(raw.get("draws"), "draws", int)
    seed = _num(raw.get("seed"), "seed", int)
    return RunConfig(
        mu=_num(raw.get("mu"), "mu"),
        p=_num(raw["p"], "p"),
        high=models["high"],
        low=models["low"],
        grid=_parse_grid(raw["grid"]) if raw.get("grid") is not None else None,
        seed=DEFAULT_SEED if seed is None else seed,
        draws=DEFAULT_DRAWS if draws is None else draws,
        threads=threads if threads else (os.cpu_count() or 1),
        output=raw.get("output"),
        format=fmt,
        figure=figure,
        vary=vary,
        beta=_num(raw.get("beta"), "beta"),
        p_list=p_list,
    )


def _clean(obj):
    """Round reals to 12 significant digits; map non-finite reals to strings."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, int, str)) or obj is None:
        return obj
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(format_real(v)) if math.isfinite(v) else format_real(v)
    return str(obj)


def to_json(obj):
    return json.dumps(_clean(obj), indent=2)


def rows_to_csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_real(v) for v in row])
    return buf.getvalue()


def _emit(cfg, text):
    if not text.endswith("\n"):
        text += "\n"
    if cfg.output:
        with open(cfg.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _check_assumptions(cfg, mu):
    report = validate_assumptions(cfg.pair, mu)
    if not report.overall:
        _emit(cfg, to_json({"assumptions": report.to_dict()}))
        return False
    return True


def _structure(cfg):
    try:
        return InformationStructure(cfg.mu, cfg.p, cfg.pair)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def cmd_validate(cfg):
    report = validate_assumptions(cfg.pair, cfg.mu)
    _emit(cfg, to_json(report.to_dict()))
    return EXIT_OK if report.overall else EXIT_ASSUMPTION


def cmd_solve(cfg):
    if not _check_assumptions(cfg, cfg.mu):
        return EXIT_ASSUMPTION
    sol = solve_cutoff(_structure(cfg))
    d = sol.to_dict()
    if cfg.format == "csv":
        _emit(cfg, rows_to_csv(tuple(d), [tuple(d.values())]))
    else:
        _emit(cfg, to_json(d))
    return EXIT_OK if sol.exists else EXIT_NO_EQUILIBRIUM


def _fig1(cfg):
    pair, mu = cfg.pair, cfg.mu
    cb = crossing_beliefs(mu, pair)
    grid = np.unique(np.concatenate([np.linspace(0.0, 1.0, FIG1_POINTS),
                                     [cb.beta_dagger_0, cb.beta_dagger_1]]))
    cols = [belief_cdf(mu, pair, grid, t, s) for t in "hl" for s in (0, 1)]
    return rows_to_csv(FIG1_COLUMNS, zip(grid, *cols))


def _solve_row(args):
    mu, p, pair = args
    try:
        sol = solve_cutoff(InformationStructure(mu, p, pair))
    except (ReptalkError, ArithmeticError, ValueError) as exc:  # reported per row
        return None, f"{type(exc).__name__}: {exc}"
    if not sol.exists:
        return None, "NoEquilibrium: crossing beliefs not ordered"
    return sol, None


def _solve_rows(tasks, threads):
    if threads > 1 and len(tasks) >= 2 * threads:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_solve_row, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    return [_solve_row(t) for t in tasks]


def cmd_sweep(cfg):
    pair = cfg.pair
    if cfg.figure == "fig1":
        if cfg.mu is None:
            raise ConfigError("missing required key 'mu'")
        if not _check_assumptions(cfg, cfg.mu):
            return EXIT_ASSUMPTION
        _emit(cfg, _fig1(cfg))
        return EXIT_OK

    grid = cfg.grid
    if grid is None:
        if cfg.vary == "p" or cfg.figure != "fig2":
            raise ConfigError("missing required key 'grid'")
        grid = Grid(0.5, 0.999, 0.002)
    pts = grid.points()
    check_mu = cfg.mu if cfg.vary == "p" else (float(pts[0]) if pts.size else 0.5)
    if cfg.vary == "p" and cfg.mu is None:
        raise ConfigError("missing required key 'mu'")
    report = validate_assumptions(pair, min(max(check_mu, 0.5), 0.999999))
    if not (report.part_a and report.part_b) or (cfg.vary == "p" and not report.part_c):
        _emit(cfg, to_json({"assumptions": report.to_dict()}))
        return EXIT_ASSUMPTION

    if cfg.figure == "fig2":
        pts = pts[pts < pair.mu_upper]
        res = _solve_rows([(float(m), cfg.p, pair) for m in pts], cfg.threads)
        rows, errs = [], []
        for m, (sol, err) in zip(pts, res):
            rows.append((float(m), sol.matching_total if sol else None, float(m)))
            errs.append(err)
        cols = FIG2_COLUMNS
    elif cfg.vary == "mu":
        ok = [m for m in pts if 0.5 <= m < pair.mu_upper]
        prof = payoff_profile(cfg.p, pair, ok, threads=cfg.threads)
        by_mu = {r.mu: r for r in prof.rows}
        rows, errs = [], []
        for m in pts:
            r = by_mu.get(float(m))
            if r is None:
                rows.append((float(m),) + (None,) * 4 + (float(m), None, None))
                errs.append(f"DomainError: mu={float(m)} outside [1/2, {pair.mu_upper})")
            else:
                rows.append(tuple(getattr(r, c) for c in PROFILE_COLUMNS))
                errs.append(r.error)
        cols = PROFILE_COLUMNS
    else:
        res = _solve_rows([(cfg.mu, float(q), pair) for q in pts], cfg.threads)
        rows, errs = [], []
        for q, (sol, err) in zip(pts, res):
            if sol is None:
                rows.append((float(q), cfg.mu) + (None,) * 4 + (cfg.mu, None, None))
            else:
                rows.append((float(q), cfg.mu, sol.beta, sol.matching_total, sol.matching_h,
                             sol.matching_l, cfg.mu, sol.receiver_payoff, sol.influential))
            errs.append(err)
        cols = ("p",) + PROFILE_COLUMNS

    if any(errs):
        cols = tuple(cols) + ("error",)
        rows = [tuple(r) + (e or "",) for r, e in zip(rows, errs)]
    _emit(cfg, rows_to_csv(cols, rows))
    return EXIT_OK


def cmd_regions(cfg):
    pair = cfg.pair
    report = validate_assumptions(pair, 0.5)
    if not (report.part_a and report.part_b):
        _emit(cfg, to_json({"assumptions": report.to_dict()}))
        return EXIT_ASSUMPTION
    step = cfg.grid.step if cfg.grid else 0.002
    out = {"pair": pair.describe()}
    try:
        out["regions"] = influential_intervals(cfg.p, pair, step, cfg.threads).to_dict()
        if cfg.p_list:
            out["nesting"] = region_nesting(cfg.p_list, pair, step, threads=cfg.threads).to_dict()
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    _emit(cfg, to_json(out))
    return EXIT_OK


def cmd_verify(cfg):
    if not _check_assumptions(cfg, cfg.mu):
        return EXIT_ASSUMPTION
    xi = _structure(cfg)
    sol = None
    beta = cfg.beta
    if beta is None:
        sol = solve_cutoff(xi)
        if not sol.exists:
            _emit(cfg, to_json({"solution": sol.to_dict()}))
            return EXIT_NO_EQUILIBRIUM
        beta = sol.beta
    if not 0.0 < beta < 1.0:
        raise ConfigError(f"key 'beta': must lie in (0, 1), got {beta}")
    try:
        rep = reputations(xi, beta)
        reference = {**rep.to_dict(), "matching": matching_payoffs(xi, beta).total}
    except ReptalkError:  # degenerate candidate: compare with quadrature instead
        reference = None
    oracle = run_oracle(xi, beta, n=cfg.draws, seed=cfg.seed, reference=reference,
                        threads=cfg.threads)
    out = {"beta": beta, "oracle": oracle.to_dict()}
    if sol is not None:
        out["solution"] = sol.to_dict()
    _emit(cfg, to_json(out))
    return EXIT_OK if oracle.passed else EXIT_VERIFY


def _read_candidate(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"candidate {path}: {exc}") from None
    beta = doc.get("beta") if isinstance(doc, dict) else None
    if beta is None and isinstance(doc, dict) and isinstance(doc.get("solution"), dict):
        beta = doc["solution"].get("beta")
    if beta is None:
        raise ConfigError(f"candidate {path}: no 'beta' field")
    return beta


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "regions": cmd_regions,
    "verify": cmd_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="reptalk", description="Solve and check reputational cheap-talk equilibria.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config path, or - for stdin")
        sp.add_argument("--mu", type=float)
        sp.add_argument("--p", type=float)
        sp.add_argument("--high", help="mle:<x> | hyper:<k> | table:<path>")
        sp.add_argument("--low", help="mle:<x> | hyper:<k> | table:<path>")
        sp.add_argument("--grid", help="lo:hi:step")
        sp.add_argument("--threads", type=int)
        sp.add_argument("--output")
        sp.add_argument("--format", choices=("json", "csv"))
        if name == "sweep":
            sp.add_argument("--figure", choices=("fig1", "fig2"))
            sp.add_argument("--vary", choices=("mu", "p"))
        if name == "regions":
            sp.add_argument("--p-list", dest="p_list", help="comma-separated ascending p values")
        if name == "verify":
            sp.add_argument("--seed", type=int)
            sp.add_argument("--draws", type=int)
            sp.add_argument("--beta", type=float, help="candidate cutoff to check")
            sp.add_argument("--candidate", help="JSON file with a 'beta' field (solve output)")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if getattr(args, "candidate", None) and args.beta is None:
            args.beta = _read_candidate(args.candidate)
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoEquilibriumError, SingleCrossingError, InternalConsistencyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_EQUILIBRIUM


if __name__ == "__main__":
    sys.exit(main())
