"""Command-line entry point: ``epinet {gen,exact,mc,bounds,sweep,verify}``."""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import analysis, exact, export, montecarlo
from .exact import EpidemicParams, IntegrationError, SizeCapError
from .graph import FAMILIES, ConvergenceError, GraphError, generate_family, read_edgelist, write_edgelist
from .verify import format_table, run_verification

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(ValueError):
    pass


def _graph_args(ap: argparse.ArgumentParser) -> None:
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph", help="edge-list file")
    src.add_argument("--family", choices=FAMILIES)
    ap.add_argument("--n", type=int, help="number of nodes (with --family)")
    ap.add_argument("--p", type=float, help="edge probability (erdos_renyi)")
    ap.add_argument("--seed", type=int, help="generator seed (erdos_renyi)")


def _rate_args(ap: argparse.ArgumentParser, required: bool = True) -> None:
    ap.add_argument("--tau", type=float, help="effective infection rate, implies delta=1")
    ap.add_argument("--beta", type=float)
    ap.add_argument("--delta", type=float)
    ap.set_defaults(_rates_required=required)


def _grid_args(ap: argparse.ArgumentParser, tmax: float = 10.0, points: int = 201) -> None:
    ap.add_argument("--tmax", type=float, default=tmax, help="horizon in scaled time")
    ap.add_argument("--points", type=int, default=points)


def _threads_arg(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--threads", type=int, default=None, help="worker processes (default $EPINET_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="epinet", description="Exact and simulated SIS/SIR epidemics on small graphs.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a family graph as an edge list")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("exact", help="integrate the exact master equation")
    _graph_args(p)
    p.add_argument("--model", type=str.upper, choices=(exact.SIS, exact.SIR), default=exact.SIS)
    _rate_args(p)
    p.add_argument("--init", default="0", help="comma separated nodes or random:k:seed")
    _grid_args(p)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-nodes", type=int, default=None, help="raise the default size cap")
    p.add_argument("--no-marginals", action="store_true")
    p.add_argument("--dist-out", help="write the final joint distribution here")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("mc", help="Monte Carlo ensemble")
    _graph_args(p)
    p.add_argument("--model", type=str.upper, choices=(exact.SIS, exact.SIR), default=exact.SIS)
    _rate_args(p)
    p.add_argument("--init", default="0")
    _grid_args(p, points=51)
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--master-seed", type=int, default=0)
    _threads_arg(p)
    p.add_argument("--trace-out", help="write the event trace of run 0 here")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("bounds", help="spectral bounds and threshold estimate")
    _graph_args(p)
    p.add_argument("--method", choices=analysis.METHODS, default=analysis.METHODS[0])
    p.add_argument("--backend", choices=analysis.BACKENDS, default="exact_qs")
    p.add_argument("-o", "--output", help="JSON report (stdout if omitted)")

    p = sub.add_parser("sweep", help="quasi-stationary threshold curve over tau")
    _graph_args(p)
    p.add_argument("--tau-min", type=float, help="default 0.8/lambda1")
    p.add_argument("--tau-max", type=float, help="default 3/lambda1")
    p.add_argument("--tau-points", type=int, default=45)
    p.add_argument("--method", choices=analysis.METHODS, default=analysis.METHODS[0])
    p.add_argument("--backend", choices=analysis.BACKENDS, default="exact_qs")
    p.add_argument("--samples", type=int, default=1000, help="qs_simulate samples per tau")
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("verify", help="residual, identity, dominance and bound checks")
    _graph_args(p)
    _rate_args(p)
    p.add_argument("--init", default="0")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("-o", "--output", help="also write the table as JSON")
    return ap


def parse_init(spec: str, n: int) -> list[int]:
    """``"0,3"`` or ``random:k:seed`` (k distinct nodes drawn with the given seed)."""
    spec = spec.strip()
    if spec.startswith("random:"):
        try:
            _, k, seed = spec.split(":")
            k, seed = int(k), int(seed)
        except ValueError:
            raise UsageError(f"bad init spec {spec!r}, expected random:k:seed") from None
        if not 1 <= k <= n:
            raise UsageError(f"random init needs 1 <= k <= {n}")
        return sorted(int(j) for j in np.random.default_rng(seed).choice(n, size=k, replace=False))
    try:
        nodes = sorted({int(x) for x in spec.split(",") if x.strip()})
    except ValueError:
        raise UsageError(f"bad init spec {spec!r}") from None
    if not nodes or min(nodes) < 0 or max(nodes) >= n:
        raise UsageError(f"init nodes must lie in [0, {n})")
    return nodes


def load_graph(args):
    if args.graph is not None:
        if args.n is not None or args.p is not None or args.seed is not None:
            raise UsageError("--n/--p/--seed only apply with --family")
        try:
            return read_edgelist(args.graph)
        except OSError as e:
            raise UsageError(f"cannot read graph file: {e}") from None
    if args.n is None:
        raise UsageError("--family needs --n")
    return generate_family(args.family, args.n, p=args.p, seed=args.seed)


def load_params(args) -> EpidemicParams:
    if args.tau is not None:
        if args.beta is not None or args.delta is not None:
            raise UsageError("give either --tau or --beta/--delta, not both")
        return EpidemicParams.from_tau(args.tau)
    if args.beta is None:
        raise UsageError("rates missing: give --tau or --beta [--delta]")
    return EpidemicParams(args.beta, 1.0 if args.delta is None else args.delta)


def _grid(args) -> np.ndarray:
    if args.points < 2 or args.tmax <= 0:
        raise UsageError("need --points >= 2 and --tmax > 0")
    return np.linspace(0.0, args.tmax, args.points)


def threads(value) -> int:
    if value is not None:
        return max(1, value)
    return montecarlo.default_workers()


def cmd_gen(args) -> int:
    write_edgelist(generate_family(args.family, args.n, p=args.p, seed=args.seed), args.output)
    return EXIT_OK


def cmd_exact(args) -> int:
    g, p = load_graph(args), load_params(args)
    init = parse_init(args.init, g.n)
    traj = exact.solve(args.model, g, p, init, _grid(args), tol=args.tol, max_nodes=args.max_nodes)
    m = exact.prevalence_moments(traj, g)
    export.moments_csv(args.output, m, None if args.no_marginals else traj)
    if args.dist_out:
        export.distribution_csv(args.dist_out, traj.dists[-1])
    return EXIT_OK


def cmd_mc(args) -> int:
    g, p = load_graph(args), load_params(args)
    init = parse_init(args.init, g.n)
    grid = _grid(args)
    stats = montecarlo.ensemble(
        args.model, g, p, init, args.tmax, args.runs, grid, master_seed=args.master_seed, workers=threads(args.threads)
    )
    export.ensemble_csv(args.output, stats)
    if args.trace_out:
        trace = montecarlo.simulate(args.model, g, p, init, args.tmax, rng=montecarlo.run_rng(args.master_seed, 0))
        export.trace_csv(args.trace_out, trace)
    return EXIT_OK


def cmd_bounds(args) -> int:
    g = load_graph(args)
    if g.m == 0:
        raise UsageError("graph has no edges")
    report = analysis.threshold_report(g, method=args.method, backend=args.backend)
    text = export.to_json(report)
    if args.output:
        export.write_json(args.output, report)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    g = load_graph(args)
    if g.m == 0:
        raise UsageError("graph has no edges")
    default = analysis.default_tau_grid(g, args.tau_points)
    lo = default[0] if args.tau_min is None else args.tau_min
    hi = default[-1] if args.tau_max is None else args.tau_max
    if not 0 < lo < hi or args.tau_points < 2:
        raise UsageError("need 0 < tau-min < tau-max and tau-points >= 2")
    taus = np.linspace(lo, hi, args.tau_points)
    qs_kwargs = None
    if args.backend == "qs_simulate":
        qs_kwargs = {"samples": args.samples, "seed": args.master_seed}
    est = analysis.estimate_threshold(g, taus, method=args.method, backend=args.backend, qs_kwargs=qs_kwargs)
    if args.format == "csv":
        export.write_csv(args.output, analysis.ThresholdCurve.CSV_FIELDS, est.curve.rows())
    else:
        export.write_json(args.output, est)
    return EXIT_OK


def cmd_verify(args) -> int:
    g, p = load_graph(args), load_params(args)
    init = parse_init(args.init, g.n)
    checks = run_verification(g, p, init, tol=args.tol)
    sys.stdout.write(format_table(checks))
    if args.output:
        export.write_json(args.output, checks)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_NUMERIC


COMMANDS = {
    "gen": cmd_gen,
    "exact": cmd_exact,
    "mc": cmd_mc,
    "bounds": cmd_bounds,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def run(argv=None) -> int:
    """Run one command and return its exit code (0 ok, 2 usage, 3 numerical failure)."""
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, GraphError, SizeCapError) as e:
        print(f"epinet: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, ConvergenceError, FloatingPointError) as e:
        print(f"epinet: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"epinet: error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
