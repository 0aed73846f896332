"""Command-line front end: exponents, figure tables, simulations and self-checks."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from qlimit import __version__
from qlimit.chernoff import bound_at, continuum_exponent, pixelated_exponent
from qlimit.errors import ConvergenceError, ReconstructionError
from qlimit.gaussian import (
    appendix_b_qcb,
    hypothesis_h0,
    hypothesis_h1,
    normalized_quantum_exponent,
    q_of_s,
    quantum_chernoff,
    quantum_exponent,
    thermal,
)
from qlimit.optics import SceneParams, mode_geometry
from qlimit.receiver import (
    normalized_receiver_exponent,
    receiver_exponent,
    receiver_exponent_bruteforce,
    two_mode_counting_exponent,
)

EXIT_OK, EXIT_INPUT, EXIT_VALIDATION, EXIT_IO = 0, 1, 2, 3

FIG_MU, FIG_N0 = 0.1, 1e-3
FIG5_MU = np.geomspace(0.01, 5.0, 60)
FIG4_N0 = np.geomspace(1e-6, 1e-1, 26)
FIG2A_DELTA = np.round(np.arange(1, 76) * 0.02, 10)
FIG2B_DELTA = (0.0, 0.3, 0.4, 0.5)
FIG_M = np.geomspace(1e4, 1e7, 31)


class InputError(Exception):
    pass


class ValidationFailure(Exception):
    pass


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    values: tuple
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variable not in ("mu", "n0", "delta", "m"):
            raise InputError(f"cannot sweep {self.variable!r}")
        vals = np.asarray(self.values, dtype=float)
        if vals.size == 0:
            raise InputError("sweep needs at least one value")
        if np.any(np.diff(vals) <= 0):
            raise InputError("sweep values must be strictly increasing")

    @classmethod
    def from_range(cls, variable, start, stop, count, scale="linear", fixed=None):
        if count < 1:
            raise InputError("count must be >= 1")
        if scale == "log":
            if start <= 0 or stop <= 0:
                raise InputError("log sweeps need positive bounds")
            vals = np.geomspace(start, stop, count)
        else:
            vals = np.linspace(start, stop, count)
        return cls(variable, tuple(float(v) for v in vals), dict(fixed or {}))


# --- row builders ------------------------------------------------------------------


def exponent_row(mu: float, n0: float, delta: float | None = None) -> dict:
    SceneParams(mu, n0)
    row = {"mu": mu, "n0": n0}
    if delta is not None:
        if not delta > 0:
            raise InputError(f"delta must be > 0, got {delta!r}")
        row["delta"] = delta
    c = continuum_exponent(mu).exponent
    row["c_mu"] = c
    if delta is not None:
        cd = pixelated_exponent(mu, delta).exponent
        if cd > c + 1e-12:
            raise ValidationFailure(f"pixelated exponent {cd!r} exceeds continuum {c!r}")
        row["c_mu_delta"] = cd
    row["xi_q"] = quantum_exponent(mu, n0).exponent
    row["xi_r"] = receiver_exponent(mu, n0).exponent
    row["z_mu"] = normalized_quantum_exponent(mu)
    row["r_mu"] = normalized_receiver_exponent(mu)
    return row


def figure_rows(fig: str, mu: float | None = None, n0: float | None = None, threads: int = 1) -> list[dict]:
    mu = FIG_MU if mu is None else mu
    n0 = FIG_N0 if n0 is None else n0
    if fig == "2a":
        c = continuum_exponent(mu).exponent
        vals = _pmap(lambda d: pixelated_exponent(mu, float(d)).exponent, FIG2A_DELTA, threads)
        return [{"mu": mu, "delta": float(d), "c_mu_delta": v, "c_mu": c} for d, v in zip(FIG2A_DELTA, vals)]
    if fig == "2b":
        rows = []
        for d in FIG2B_DELTA:
            ex = continuum_exponent(mu) if d == 0 else pixelated_exponent(mu, d)
            for m in FIG_M:
                rows.append({"mu": mu, "n0": n0, "delta": d, "m": float(m), "c": ex.exponent, "bound": bound_at(ex, m * n0)})
        return rows
    if fig == "3":
        c = continuum_exponent(mu)
        xq = quantum_exponent(mu, n0).exponent
        xr = receiver_exponent(mu, n0).exponent
        return [
            {
                "mu": mu,
                "n0": n0,
                "m": float(m),
                "fpa_bound": bound_at(c, m * n0),
                "qcb_bound": bound_at(xq, m),
                "mode_bound": bound_at(xr, m),
            }
            for m in FIG_M
        ]
    if fig == "4":
        def one(n):
            n = float(n)
            return {
                "mu": mu,
                "n0": n,
                "xi_q_over_n0": quantum_exponent(mu, n).exponent / n,
                "xi_r_over_n0": receiver_exponent(mu, n).exponent / n,
            }

        rows = _pmap(one, FIG4_N0, threads)
        r_lim = normalized_receiver_exponent(mu)
        for r in rows:
            r["r_mu"] = r_lim
        return rows
    if fig == "5":
        def one(m_):
            m_ = float(m_)
            return {
                "mu": m_,
                "c_mu": continuum_exponent(m_).exponent,
                "z_mu": normalized_quantum_exponent(m_),
                "r_mu": normalized_receiver_exponent(m_),
            }

        return _pmap(one, FIG5_MU, threads)
    raise InputError(f"unknown figure {fig!r}")


def sweep_rows(spec: SweepSpec, threads: int = 1) -> list[dict]:
    base = {"mu": FIG_MU, "n0": FIG_N0, "delta": None}
    base.update(spec.fixed)
    if spec.variable == "m":
        raise InputError("exponents do not depend on m; sweep m through 'figure 3' or 'simulate'")

    def one(v):
        args = dict(base)
        args[spec.variable] = float(v)
        return exponent_row(args["mu"], args["n0"], args["delta"])

    return _pmap(one, spec.values, threads)


def simulate_row(receiver, mu, n0, m, trials, seed, delta=None, threads=1) -> dict:
    from qlimit.montecarlo import TrialConfig, chernoff_bound, estimate_error

    cfg = TrialConfig(SceneParams(mu, n0, m), receiver, trials, seed, delta=delta)
    est = estimate_error(cfg, threads=threads)
    bound = chernoff_bound(cfg)
    row = {"receiver": receiver, "mu": mu, "n0": n0, "m": m}
    if delta is not None:
        row["delta"] = delta
    row.update(
        trials=trials,
        seed=seed,
        p_hat=est.p_hat,
        ci_low=est.ci_low,
        ci_high=est.ci_high,
        errors_h0=est.errors_h0,
        errors_h1=est.errors_h1,
        bound=bound,
    )
    if bound > 0:
        row["ratio"] = est.p_hat / bound
    return row


def _pmap(fn, values, threads):
    values = list(values)
    if threads <= 1:
        return [fn(v) for v in values]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, values))


# --- validation suite ----------------------------------------------------------------


def _check(rows, name, ok, observed, expected, status=None):
    rows.append(
        {
            "check": name,
            "status": status or ("pass" if ok else "FAIL"),
            "observed": float(observed),
            "expected": str(expected),
        }
    )


def validation_rows(level: str) -> list[dict]:
    from scipy.stats import chisquare

    from qlimit.fock import fock_oracle_q
    from qlimit.montecarlo import sample_mode_records, sample_sinc2
    from qlimit.optics import sinc2_cdf
    from qlimit.receiver import log_pmf_h1

    full = level == "full"
    rows: list[dict] = []

    n0 = 0.01
    s_vals = (0.3, 0.5, 0.7) if full else (0.5,)
    for mu in (0.1, 0.5, 1.0):
        g = mode_geometry(mu, n0)
        h0, h1 = hypothesis_h0(g, n0), hypothesis_h1(g, n0)
        worst = max(abs(q_of_s(h0, h1, s) - fock_oracle_q(h0, h1, s, 25)) for s in s_vals)
        _check(rows, f"fock-vs-gaussian mu={mu}", worst < 1e-8, worst, "< 1e-08")

    cal = quantum_chernoff(thermal(0.01), thermal(0.0)).exponent
    _check(rows, "thermal-vs-vacuum calibration", abs(cal - math.log1p(0.01)) < 1e-10, cal, math.log1p(0.01))
    x = quantum_exponent(1.0, 0.01).exponent
    _check(rows, "mu=1 product reduction", abs(x - 2 * math.log1p(0.005)) < 1e-10, x, 2 * math.log1p(0.005))

    mus = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 3.0) if full else (0.1, 0.5, 2.0)
    n0s = (1e-4, 1e-3, 1e-2, 1e-1) if full else (1e-3, 1e-2)
    worst_rq = worst_bf = 0.0
    for mu in mus:
        for n in n0s:
            xr = receiver_exponent(mu, n).exponent
            worst_rq = max(worst_rq, abs(xr - quantum_exponent(mu, n).exponent) / xr)
            worst_bf = max(worst_bf, abs(xr - receiver_exponent_bruteforce(mu, n).exponent))
    _check(rows, "xi_r equals xi_q (relative)", worst_rq < 1e-6, worst_rq, "< 1e-06")
    _check(rows, "receiver closed form vs brute force", worst_bf < 1e-9, worst_bf, "< 1e-09")

    etas = (0.1, 0.3, 0.5, 0.7, 0.9) if full else (0.3, 0.7)
    worst_excess = 0.0
    worst_gap = 0.0
    for a in (0.005, 0.01, 0.02):
        for b in (0.005, 0.01, 0.02):
            if b >= a:
                continue
            for e in etas:
                q = appendix_b_qcb(a, b, e).exponent
                for basis in ("h0-product", "h1-product"):
                    c = two_mode_counting_exponent(a, b, e, basis).exponent
                    worst_excess = max(worst_excess, c - q)
                worst_gap = max(worst_gap, q - two_mode_counting_exponent(a, b, e).exponent)
    _check(rows, "two-mode counting never beats the QCB", worst_excess < 1e-9, worst_excess, "<= 1e-09")
    _check(rows, "two-mode h0-product counting vs QCB gap", True, worst_gap, "reported only", status="info")

    rng = np.random.default_rng(20240611)
    n = 200_000 if full else 50_000
    y = sample_sinc2(rng, n)
    edges = np.concatenate([[-np.inf], np.arange(-4.0, 4.01, 0.25), [np.inf]])
    obs = np.histogram(y, edges)[0]
    exp = np.diff(np.concatenate([[0.0], sinc2_cdf(edges[1:-1]), [1.0]])) * n
    p = chisquare(obs, exp).pvalue
    _check(rows, "sinc^2 sampler chi-square p-value", p > 0.01, p, "> 0.01")

    g = mode_geometry(0.5, 0.3)
    recs = sample_mode_records(1, g, n, rng)
    keys, counts = np.unique(np.minimum(recs, 2), axis=0, return_counts=True)
    kk = np.array([(i, j, k) for i in range(3) for j in range(3) for k in range(3)])
    expected = _capped_pmf_h1(kk, g, log_pmf_h1) * n
    observed = np.zeros(len(kk))
    for key, c in zip(keys, counts):
        observed[(key[0] * 3 + key[1]) * 3 + key[2]] += c
    keep = expected > 5
    ex = expected[keep] * observed[keep].sum() / expected[keep].sum()
    p = chisquare(observed[keep], ex).pvalue
    _check(rows, "mode-record sampler chi-square p-value", p > 0.01, p, "> 0.01")
    return rows


def _capped_pmf_h1(kk, geom, log_pmf_h1):
    """H1 click PMF with each count capped at 2 (``2`` means ``>= 2``)."""
    k = np.arange(60)
    g1, g2, g3 = (a.ravel() for a in np.meshgrid(k, k, k, indexing="ij"))
    p = np.exp(log_pmf_h1(g1, g2, g3, geom))
    code = (np.minimum(g1, 2) * 3 + np.minimum(g2, 2)) * 3 + np.minimum(g3, 2)
    out = np.bincount(code, weights=p, minlength=27)
    return out[(kk[:, 0] * 3 + kk[:, 1]) * 3 + kk[:, 2]]


# --- output --------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def render(rows: list[dict], meta: dict, fmt: str) -> str:
    for r in rows:
        for k, v in r.items():
            if isinstance(v, (float, np.floating)) and math.isnan(v):
                raise ValidationFailure(f"NaN in column {k!r}")
    if fmt == "json":
        clean = [{k: (float(v) if isinstance(v, np.floating) else v) for k, v in r.items()} for r in rows]
        return json.dumps({"meta": meta, "rows": clean}, indent=2) + "\n"
    cols: list[str] = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) if c in r else "" for c in cols])
    return buf.getvalue()


def emit(text: str, out: str | None):
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc.strerror or exc}") from exc


# --- argument parsing ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--threads", type=_positive_int, default=1)

    p = _Parser(prog="qlimit", description=__doc__)
    p.add_argument("--version", action="version", version=f"qlimit {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("exponent", parents=[common], help="all exponents at one (mu, n0)")
    e.add_argument("--mu", type=float, required=True)
    e.add_argument("--n0", type=float, required=True)
    e.add_argument("--delta", type=float, default=None)

    f = sub.add_parser("figure", parents=[common], help="data table behind a figure")
    f.add_argument("id", nargs="?", choices=("2a", "2b", "3", "4", "5"))
    f.add_argument("--figure", dest="figure_flag", choices=("2a", "2b", "3", "4", "5"))
    f.add_argument("--mu", type=float, default=None)
    f.add_argument("--n0", type=float, default=None)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo error rate of one receiver")
    s.add_argument("--receiver", choices=("continuum", "pixelated", "mode-sorted"), default="mode-sorted")
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--n0", type=float, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--delta", type=float, default=None)
    s.add_argument("--trials", type=_positive_int, default=10_000)
    s.add_argument("--seed", type=int, default=0)

    w = sub.add_parser("sweep", parents=[common], help="exponents over a parameter sweep")
    w.add_argument("--variable", choices=("mu", "n0", "delta"), required=True)
    g = w.add_mutually_exclusive_group(required=True)
    g.add_argument("--values", type=float, nargs="+")
    g.add_argument("--range", type=float, nargs=3, metavar=("START", "STOP", "COUNT"))
    w.add_argument("--log", action="store_true", help="log-spaced --range")
    w.add_argument("--mu", type=float, default=None)
    w.add_argument("--n0", type=float, default=None)
    w.add_argument("--delta", type=float, default=None)

    v = sub.add_parser("validate", parents=[common], help="cross-check the numerics against oracles")
    v.add_argument("--level", choices=("quick", "full"), default="quick")
    return p


def _meta(args) -> dict:
    meta = {"tool": f"qlimit {__version__}", "command": args.command}
    for k, val in sorted(vars(args).items()):
        if k in ("command", "out", "format") or val is None:
            continue
        meta[k] = val if not isinstance(val, list) else " ".join(map(str, val))
    return meta


def run(args) -> tuple[list[dict], int]:
    if args.command == "exponent":
        return [exponent_row(args.mu, args.n0, args.delta)], EXIT_OK
    if args.command == "figure":
        fig = args.id or args.figure_flag
        if fig is None:
            raise InputError("figure id required (2a, 2b, 3, 4 or 5)")
        if args.id and args.figure_flag and args.id != args.figure_flag:
            raise InputError("conflicting figure ids")
        return figure_rows(fig, args.mu, args.n0, args.threads), EXIT_OK
    if args.command == "simulate":
        rows = [simulate_row(args.receiver, args.mu, args.n0, args.m, args.trials, args.seed, args.delta, args.threads)]
        return rows, EXIT_OK
    if args.command == "sweep":
        fixed = {k: getattr(args, k) for k in ("mu", "n0", "delta") if getattr(args, k) is not None and k != args.variable}
        if args.values:
            spec = SweepSpec(args.variable, tuple(args.values), fixed)
        else:
            start, stop, count = args.range
            if count != int(count):
                raise InputError("COUNT must be an integer")
            spec = SweepSpec.from_range(args.variable, start, stop, int(count), "log" if args.log else "linear", fixed)
        return sweep_rows(spec, args.threads), EXIT_OK
    if args.command == "validate":
        t0 = time.perf_counter()
        rows = validation_rows(args.level)
        failed = [r for r in rows if r["status"] == "FAIL"]
        for r in failed:
            print(f"FAIL {r['check']}: observed {r['observed']:.6g}, expected {r['expected']}", file=sys.stderr)
        print(f"{len(rows) - len(failed)}/{len(rows)} checks passed in {time.perf_counter() - t0:.1f} s", file=sys.stderr)
        return rows, EXIT_VALIDATION if failed else EXIT_OK
    raise InputError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rows, code = run(args)
        text = render(rows, _meta(args), args.format)
    except (InputError, ValueError) as exc:
        print(f"qlimit: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValidationFailure, ConvergenceError, ReconstructionError, ArithmeticError) as exc:
        print(f"qlimit: check failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        emit(text, args.out)
    except OSError as exc:
        print(f"qlimit: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
