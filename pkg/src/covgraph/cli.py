"""Command-line front end.

Subcommands: ``fit`` (estimate one covariance), ``simulate`` (Monte
Carlo comparison), ``loglik`` (evaluate a stored estimate), and
``compare`` (pairwise log-likelihood differences between methods).
Data lines go to stdout, diagnostics to stderr; exit code 0 means a
converged fit, 2 a fit that did not converge, 1 an input error.
Setting ``COVGRAPH_QUIET`` or ``NO_COLOR`` silences stderr progress.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from typing import Sequence

import numpy as np

from . import io as cio
from .anderson import fit_anderson
from .dual import fit_dual
from .emplik import ELConfig, ELInfeasibleError, fit_el
from .graphs import CovarianceGraph, GraphError, cliques, graph_from_matrix, validate_family
from .icf import fit_icf
from .icf_multi import fit_icf_multi
from .model import (
    ConstrainedCovariance,
    ModelError,
    SampleStats,
    deviance,
    profile_loglik,
    sample_stats,
)
from .results import FitConfig
from .simulate import METHOD_NAMES, SimSpec, run_simulation

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_CONVERGENCE = 2

ML_METHODS = ("ml-icf", "ml-icf-multi", "ml-anderson")


def _quiet() -> bool:
    return bool(os.environ.get("COVGRAPH_QUIET") or os.environ.get("NO_COLOR"))


def _note(msg: str) -> None:
    if not _quiet():
        print(msg, file=sys.stderr)


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_INPUT


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="covgraph", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--graph", required=True, help="graph file")
        sp.add_argument("--data", help="raw data table")
        sp.add_argument("--stats", help="moment file (n, sds, correlations)")
        sp.add_argument("--delimiter", help="data delimiter (default: sniff , ; tab space)")
        sp.add_argument(
            "--header", default="auto", choices=["auto", "yes", "no"],
            help="whether the data file starts with a label row",
        )
        sp.add_argument("--tol", type=float, default=1e-8)
        sp.add_argument("--max-iter", type=int, default=5000)
        sp.add_argument("--n-adjust", action="store_true", help="use n-1 in likelihood values")

    fit = sub.add_parser("fit", help="fit one covariance estimate")
    add_common(fit)
    fit.add_argument("--method", default="ml-icf", choices=METHOD_NAMES)
    fit.add_argument("--family", help="complete-set family file (ml-icf-multi)")
    fit.add_argument("--start", help="starting matrix file")
    fit.add_argument("--trace", help="write per-sweep log-likelihood here")
    fit.add_argument("--digits", type=int, help="fixed-point output digits")
    fit.add_argument("--out", help="write the estimate matrix to this file")

    sim = sub.add_parser("simulate", help="Monte-Carlo estimator comparison")
    sim.add_argument("--sigma", required=True, help="true covariance matrix file")
    sim.add_argument("--graph", help="optional graph file; default: zero pattern of --sigma")
    sim.add_argument("--dist", default="gaussian", choices=["gaussian", "t"])
    sim.add_argument("--df", type=int, default=5)
    sim.add_argument("--n", default="100", help="comma-separated sample sizes")
    sim.add_argument("--reps", type=int, default=200)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--methods", default="ml-icf,dual,el", help="comma-separated method names")
    sim.add_argument("--tol", type=float, default=1e-8)
    sim.add_argument("--max-iter", type=int, default=5000)
    sim.add_argument("--out", help="write the report table to this file")

    ll = sub.add_parser("loglik", help="evaluate a stored estimate")
    add_common(ll)
    ll.add_argument("--matrix", required=True, help="estimate matrix file")

    cmp_ = sub.add_parser("compare", help="pairwise log-likelihood differences")
    add_common(cmp_)
    cmp_.add_argument("--methods", default="ml-icf,dual", help="comma-separated method names")
    cmp_.add_argument("--family", help="complete-set family file (ml-icf-multi)")
    return ap


def _load_inputs(args) -> tuple[CovarianceGraph, SampleStats, np.ndarray | None]:
    """Graph plus stats (aligned to graph order); raw data when given."""
    g = cio.load_graph(args.graph)
    if bool(args.data) == bool(args.stats):
        raise cio.InputError("exactly one of --data or --stats is required")
    if args.data:
        data, labels = cio.load_data(args.data, delimiter=args.delimiter, header=args.header)
        if set(labels) != set(g.vertices):
            if labels == tuple(f"X{k + 1}" for k in range(len(labels))) and len(labels) == g.p:
                labels = g.vertices  # headerless table: adopt graph order
            else:
                raise cio.InputError("data columns do not match the graph's vertices")
        stats = sample_stats(data, labels=labels).aligned_to(g.vertices)
        perm = [labels.index(v) for v in g.vertices]
        return g, stats, data[:, perm]
    stats = cio.load_stats(args.stats)
    if stats.labels is None or set(stats.labels) != set(g.vertices):
        raise cio.InputError("stats variables do not match the graph's vertices")
    return g, stats.aligned_to(g.vertices), None


def _run_method(method, stats, data, g, args, cfg):
    """Dispatch one fit; returns (matrix, loglik, converged, extras)."""
    if method == "el":
        if data is None:
            raise cio.InputError("method el needs raw data; weights require observations")
        fit = fit_el(data, g, ELConfig())
        try:
            ll = profile_loglik(stats, fit.sigma, n_adjust=args.n_adjust)
        except ModelError:
            ll = float("nan")
        return fit.sigma, ll, True, {"el_log_ratio": fit.weighted.el_log_ratio}
    if method == "ml-icf":
        res = fit_icf(stats, g, cfg)
    elif method == "ml-icf-multi":
        fam = cio.load_family(args.family, g) if getattr(args, "family", None) else cliques(g)
        bad = validate_family(g, fam)
        if bad is not None:
            raise cio.InputError(f"invalid family: {bad.message}")
        res = fit_icf_multi(stats, g, fam, cfg)
    elif method == "ml-anderson":
        res = fit_anderson(stats, g, cfg)
    elif method == "dual":
        res = fit_dual(stats, g, cfg)
    else:
        raise cio.InputError(f"unknown method {method!r}")
    extras = {
        "iterations": res.iterations,
        "residual": res.residual,
        "detail": res.detail,
        "trace": res.trace,
    }
    matrix = None if res.estimate is None else res.estimate.sigma
    return matrix, res.loglik, res.converged, extras


def cmd_fit(args) -> int:
    try:
        g, stats, data = _load_inputs(args)
        start = None
        if args.start:
            labels, m = cio.load_matrix(args.start)
            start = ConstrainedCovariance(g, m)
        cfg = FitConfig(
            tol=args.tol,
            max_iter=args.max_iter,
            start=start,
            record_trace=bool(args.trace),
            n_adjust=args.n_adjust,
        )
        t0 = time.perf_counter()
        sigma, ll, converged, extras = _run_method(args.method, stats, data, g, args, cfg)
        elapsed = time.perf_counter() - t0
    except (cio.InputError, GraphError, ModelError, ELInfeasibleError) as exc:
        return _fail(str(exc))
    out = sys.stdout
    print(f"method {args.method}", file=out)
    print(f"n {stats.n}", file=out)
    print(f"p {stats.p}", file=out)
    print(f"converged {str(converged).lower()}", file=out)
    if extras.get("iterations") is not None:
        print(f"iterations {extras['iterations']}", file=out)
    if ll is not None:
        print(f"loglik {format(ll, '.17g')}", file=out)
    if sigma is not None:
        try:
            dev, df = deviance(stats, sigma, graph=g, n_adjust=args.n_adjust)
        except ModelError:
            dev = None  # singular estimate (possible for el): no deviance value
        if dev is not None:
            key = "deviance" if args.method in ML_METHODS else "deviance-functional"
            print(f"{key} {format(dev, '.17g')}", file=out)
            print(f"df {df}", file=out)
    if extras.get("detail"):
        print(f"detail {extras['detail']}", file=out)
    if extras.get("residual") is not None:
        print(f"residual {format(extras['residual'], '.3g')}", file=out)
    if extras.get("el_log_ratio") is not None:
        print(f"el-log-ratio {format(extras['el_log_ratio'], '.17g')}", file=out)
    _note(f"fit finished in {elapsed:.3f}s")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write("sweep\tloglik\n")
            for k, value in enumerate(extras.get("trace") or (), start=1):
                fh.write(f"{k}\t{'' if value is None else format(value, '.17g')}\n")
    if sigma is None:
        print("estimate none", file=out)
        return EXIT_NO_CONVERGENCE
    if args.out:
        cio.write_matrix(args.out, sigma, labels=g.vertices, digits=args.digits)
    else:
        print("matrix", file=out)
        out.write(cio.format_matrix(sigma, labels=g.vertices, digits=args.digits))
    return EXIT_OK if converged else EXIT_NO_CONVERGENCE


def cmd_simulate(args) -> int:
    try:
        labels, sigma = cio.load_matrix(args.sigma)
        if args.graph:
            g = cio.load_graph(args.graph)
            ref = graph_from_matrix(sigma, labels=g.vertices)
            extra = set(ref.edges) - set(g.edges)
            if extra:
                raise cio.InputError(f"--sigma has nonzeros outside --graph edges: {sorted(extra)}")
            labels = g.vertices
        sizes = tuple(int(tok) for tok in str(args.n).split(",") if tok)
        methods = tuple(tok for tok in args.methods.split(",") if tok)
        spec = SimSpec(
            sigma_true=sigma,
            distribution=args.dist,
            df=args.df,
            sample_sizes=sizes,
            replications=args.reps,
            seed=args.seed,
            methods=methods,
        )
        report = run_simulation(spec, labels=labels)
    except (cio.InputError, GraphError, ModelError, ValueError) as exc:
        return _fail(str(exc))
    text = report.to_table()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        _note(f"report written to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_loglik(args) -> int:
    try:
        g, stats, _ = _load_inputs(args)
        labels, m = cio.load_matrix(args.matrix)
        if m.shape != (g.p, g.p):
            raise cio.InputError("matrix dimensions do not match the graph")
        ll = profile_loglik(stats, m, n_adjust=args.n_adjust)
        dev, df = deviance(stats, m, graph=g, n_adjust=args.n_adjust)
    except (cio.InputError, GraphError, ModelError) as exc:
        return _fail(str(exc))
    print(f"loglik {format(ll, '.17g')}")
    print(f"deviance-functional {format(dev, '.17g')}")
    print(f"df {df}")
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        g, stats, data = _load_inputs(args)
        methods = tuple(tok for tok in args.methods.split(",") if tok)
        if len(methods) < 2:
            raise cio.InputError("compare needs at least two methods")
        cfg = FitConfig(tol=args.tol, max_iter=args.max_iter, n_adjust=args.n_adjust)
        logliks = {}
        all_converged = True
        for m in methods:
            sigma, ll, converged, _ = _run_method(m, stats, data, g, args, cfg)
            all_converged &= converged
            logliks[m] = ll if ll is not None else float("nan")
    except (cio.InputError, GraphError, ModelError, ELInfeasibleError) as exc:
        return _fail(str(exc))
    for m in methods:
        print(f"loglik {m} {format(logliks[m], '.17g')}")
    for a in range(len(methods)):
        for b in range(a + 1, len(methods)):
            diff = logliks[methods[a]] - logliks[methods[b]]
            print(f"dloglik {methods[a]} {methods[b]} {format(diff, '.17g')}")
    return EXIT_OK if all_converged else EXIT_NO_CONVERGENCE


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "fit": cmd_fit,
        "simulate": cmd_simulate,
        "loglik": cmd_loglik,
        "compare": cmd_compare,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
