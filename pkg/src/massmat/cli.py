"""Command-line entry point: ``massmat {run,bound,info,verify-tilting,oracle}``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from fractions import Fraction

import numpy as np

from . import bounds, evolution, fock, free_oracle, geometry, hamiltonian, harness
from .config import ConfigError, load_config, parse_grid

__all__ = ["main", "build_parser"]


def _number(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as e:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from e


def _grid(text: str):
    try:
        return parse_grid(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="massmat", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run every block of an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides [output] dir)")

    b = sub.add_parser("bound", help="evaluate the bound, in physical or dimensionless units")
    b.add_argument("--N", type=int, required=True)
    b.add_argument("--J-over-hbar", type=_number, help="hopping rate in 1/s (physical mode)")
    b.add_argument("--r0", type=_number, help="lattice spacing in m (physical mode)")
    b.add_argument("--D", type=int, default=1)
    b.add_argument("--beta-minus-alpha", type=_number, help="physical mode; fixes alpha = 0")
    b.add_argument("--ell", type=_number, help="separation in lattice units (physical mode)")
    b.add_argument("--t", type=_number, help="time in s (physical) or dimensionless time")
    b.add_argument("--t-hopping", type=_number, help="time in units of hbar/J (physical mode)")
    b.add_argument("--mode", choices=("replica", "exact"), default="replica")
    b.add_argument("--a", type=_number, help="decay rate (dimensionless mode)")
    b.add_argument("--v", type=_number, help="velocity; defaults to 2 D J sinh(a)/a")
    b.add_argument("--J", type=_number, default=1.0, help="hopping (dimensionless mode)")
    b.add_argument("--alpha", type=_number, default=0.0)
    b.add_argument("--beta", type=_number, default=1.0)
    b.add_argument("--d", type=_number, help="d_XY (dimensionless mode)")
    b.add_argument("--t-grid", type=_grid, help="lo:hi:step time grid (dimensionless mode)")
    b.add_argument("--csv", help="write the table to this CSV file")

    i = sub.add_parser("info", help="describe model, regions and sector sizes")
    i.add_argument("config")

    vt = sub.add_parser("verify-tilting", help="dense checks of the tilting estimates")
    vt.add_argument("config")
    vt.add_argument("--out")

    o = sub.add_parser("oracle", help="free-boson cluster probabilities on a chain")
    o.add_argument("--L", type=int, required=True)
    o.add_argument("--N", type=int, required=True)
    o.add_argument("--theta", type=_number, required=True)
    o.add_argument("--r", type=int, required=True, help="first site (0-based) of the target tail")
    o.add_argument("--t", type=_grid, default=[0.0, 1.0, 2.0, 3.0], help="lo:hi:step or comma list")
    o.add_argument("--site", type=int, default=0, help="initial site of the single-particle orbital")
    o.add_argument("--compare", action="store_true", help="also evolve in the many-body engine")
    o.add_argument("--csv")
    return p


def _print_table(columns, rows, out=None):
    w = csv.writer(out or sys.stdout, delimiter="\t", lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([f"{x:.10g}" if isinstance(x, (float, np.floating)) else x for x in row])


def _save(path, columns, rows):
    if path:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(columns)
            w.writerows([[repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r] for r in rows])


def _cmd_bound(args) -> int:
    physical = args.J_over_hbar is not None or args.r0 is not None
    if physical:
        missing = [n for n in ("J_over_hbar", "r0", "beta_minus_alpha", "ell") if getattr(args, n) is None]
        if missing or (args.t is None) == (args.t_hopping is None):
            print("physical mode needs --J-over-hbar, --r0, --beta-minus-alpha, --ell and one of "
                  "--t / --t-hopping", file=sys.stderr)
            return harness.EXIT_INVALID
        t = args.t if args.t is not None else args.t_hopping / args.J_over_hbar
        pb = bounds.physical_units_bound(args.N, args.J_over_hbar, args.r0, args.D, args.beta_minus_alpha,
                                         args.ell, t, args.mode)
        cols = ["mode", "N", "t_s", "exponent", "probability", "squared"]
        rows = [[pb.mode, args.N, t, pb.exponent, pb.probability, pb.squared]]
        _print_table(cols, rows)
        print(f"exponent = {pb.exponent:.6g}, probability = e^{pb.exponent:.6g} = {pb.probability:.3e}")
        _save(args.csv, cols, rows)
        return harness.EXIT_OK

    if args.a is None or args.d is None:
        print("dimensionless mode needs --a and --d", file=sys.stderr)
        return harness.EXIT_INVALID
    v = args.v if args.v is not None else 2 * args.D * abs(args.J) * np.sinh(args.a) / args.a
    times = args.t_grid if args.t_grid is not None else [args.t if args.t is not None else 0.0]
    try:
        params = hamiltonian.BoundParams(args.a, v, min(v, 2 * args.D * abs(args.J)), args.alpha, args.beta,
                                         args.d, args.N)
    except ValueError as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return harness.EXIT_INVALID
    cols = ["t", "exponent", "norm_bound", "probability_bound", "raw_norm_bound"]
    rows = []
    for t in times:
        ev = bounds.massmat_bound(params, t)
        rows.append([float(t), ev.exponent, ev.norm_bound, ev.probability_bound, ev.raw_norm_bound])
    _print_table(cols, rows)
    _save(args.csv, cols, rows)
    return harness.EXIT_OK


def _cmd_oracle(args) -> int:
    if not 0 < args.r < args.L or not 0 <= args.site < args.L:
        print("need 0 < r < L and 0 <= site < L", file=sys.stderr)
        return harness.EXIT_INVALID
    chain = free_oracle.OneBodyChain(args.L)
    f = np.zeros(args.L)
    f[args.site] = 1.0
    probs = [free_oracle.cluster_probability(chain, f, args.r, args.theta, args.N, t) for t in args.t]
    cols = ["r", "t", "N", "theta", "probability"]
    rows = [[args.r, float(t), args.N, args.theta, p] for t, p in zip(args.t, probs)]
    status = harness.EXIT_OK
    if args.compare:
        lat = geometry.LatticeGraph.chain(args.L)
        basis = fock.build_basis("boson", args.L, args.N)
        H = hamiltonian.assemble(basis, hamiltonian.nearest_neighbor(lat, 1.0))
        res = evolution.transport_sweep(H, basis, free_oracle.product_state(basis, f),
                                        list(range(args.r, args.L)), [args.site], 0.0, args.theta, args.t)
        cols += ["engine_probability", "abs_error"]
        for row, pe in zip(rows, res.amplitudes):
            row += [float(pe), abs(row[4] - float(pe))]
        err = max((row[-1] for row in rows), default=0.0)
        print(f"# max abs error = {err:.3e}")
        if err > harness.ORACLE_ATOL:
            status = harness.EXIT_VIOLATION
    _print_table(cols, rows)
    _save(args.csv, cols, rows)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "bound":
            return _cmd_bound(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        cfg = load_config(args.config)
        if args.command == "info":
            print("\n".join(harness.info(cfg)))
            return harness.EXIT_OK
        if args.command == "verify-tilting":
            res = harness.verify_tilting(cfg, args.out)
        else:
            res = harness.run(cfg, args.out)
    except (ConfigError, geometry.InvalidRegionError, geometry.GeometryDegenerateError,
            hamiltonian.InvalidModelError, fock.InvalidSectorError, evolution.InvalidInitialStateError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return harness.EXIT_INVALID
    except (harness.ResourceError, evolution.PropagationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return harness.EXIT_FAILURE
    for msg in res.messages:
        print(msg)
    for name, path in res.artifacts.items():
        print(f"wrote {name}: {path}")
    return res.status


if __name__ == "__main__":
    sys.exit(main())
