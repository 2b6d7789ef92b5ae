"""Command-line front end.

Subcommands
-----------
reduce       run the reduction loop; writes report.json and reduced_*.mtx
linf-norm    peak gain of a system, or of the difference of two systems
bt           balanced truncation to order r; writes bt_*.mtx and hankel
hankel       Hankel singular values as JSON
error-curve  CSV of (omega, sigma_max error) samples plus detected maximizers

Systems are given as Matrix Market files via --A/--B/--C/--D and optionally
--E (identity when omitted).  Exit codes: 0 success, 1 usage error, 2
numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse

from . import __version__
from .errors import NumericalError, ParseError, UsageError
from .framework import FrameworkOptions, StabilityOptions, reduce
from .initialization import balanced_truncation
from .linf import LinfOptions, linf_norm
from .objective import error_curve
from .system import DescriptorSystem, frequency_response, poles

REPORT_SCHEMA = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _read_matrix(path):
    try:
        M = scipy.io.mmread(path)
    except (OSError, ValueError) as exc:
        raise ParseError(path, str(exc)) from None
    if scipy.sparse.issparse(M):
        M = M.toarray()
    return np.asarray(M, dtype=float)


def load_system(args) -> DescriptorSystem:
    """Assemble a DescriptorSystem from the --A/--B/--C/--D/--E file paths."""
    A = _read_matrix(args.A)
    B = _read_matrix(args.B)
    C = _read_matrix(args.C)
    n = A.shape[0]
    if args.D is not None:
        D = _read_matrix(args.D)
    else:
        D = np.zeros((C.shape[0], B.shape[1]))
    if args.E is not None:
        E = _read_matrix(args.E)
    else:
        E = np.eye(n)
    return DescriptorSystem(E, A, B, C, D, probe_seed=args.seed)


def _load_dir_system(directory, prefix, seed):
    directory = Path(directory)

    def p(name):
        f = directory / f"{prefix}{name}.mtx"
        if not f.exists():
            if name in ("E", "D"):
                return None
            raise ParseError(str(f), "file not found")
        return str(f)

    ns = argparse.Namespace(A=p("A"), B=p("B"), C=p("C"), D=p("D"), E=p("E"), seed=seed)
    return load_system(ns)


def _write_system(sys_obj, outdir, prefix):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    names = {"E": sys_obj.E, "A": sys_obj.A, "B": sys_obj.B, "C": sys_obj.C, "D": sys_obj.D}
    files = {}
    for name, M in names.items():
        f = outdir / f"{prefix}{name}.mtx"
        scipy.io.mmwrite(str(f), np.asarray(M))
        files[name] = f.name
    return files


def _add_system_args(sp, require=True):
    sp.add_argument("--A", required=require, help="Matrix Market file for A")
    sp.add_argument("--B", required=require, help="Matrix Market file for B")
    sp.add_argument("--C", required=require, help="Matrix Market file for C")
    sp.add_argument("--D", default=None, help="Matrix Market file for D (default: zero)")
    sp.add_argument("--E", default=None, help="Matrix Market file for E (default: identity)")
    sp.add_argument("--seed", type=int, default=0, help="seed for randomized probes")
    sp.add_argument("--out", default=".", help="output directory")
    sp.add_argument("--grid-points", type=int, default=2048, dest="grid_points")


def _linf_opts(args):
    return LinfOptions(grid_points=args.grid_points)


def build_parser():
    parser = _Parser(prog="linfmor", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"linfmor {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("reduce", help="reduce to a prescribed order")
    _add_system_args(sp)
    sp.add_argument("--r", type=int, required=True, help="target reduced order")
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--init", choices=("bt", "dominant"), default="bt")
    sp.add_argument("--beta", type=float, default=None,
                    help="negative stability bound on the spectral abscissa")
    sp.add_argument("--max-outer", type=int, default=30, dest="max_outer")

    sp = sub.add_parser("linf-norm", help="peak gain over the imaginary axis")
    _add_system_args(sp)
    sp.add_argument("--minus", default=None,
                    help="directory with a second system (reduced_*.mtx) to subtract")
    sp.add_argument("--minus-prefix", default="reduced_", dest="minus_prefix")

    sp = sub.add_parser("bt", help="balanced truncation baseline")
    _add_system_args(sp)
    sp.add_argument("--r", type=int, required=True)

    sp = sub.add_parser("hankel", help="Hankel singular values")
    _add_system_args(sp)

    sp = sub.add_parser("error-curve", help="sample the error curve on a grid")
    _add_system_args(sp)
    sp.add_argument("--minus", required=True,
                    help="directory with the reduced system (reduced_*.mtx)")
    sp.add_argument("--minus-prefix", default="reduced_", dest="minus_prefix")
    return parser


def _report_dict(report, config):
    rows = [dataclasses.asdict(row) for row in report.rows]
    return {
        "schema": REPORT_SCHEMA,
        "config": config,
        "rows": rows,
        "error": report.error,
        "omega_star": report.omega_star,
        "termination": report.termination,
        "init_mode_used": report.init_mode_used,
        "hankel": None if report.hankel is None else list(map(float, report.hankel)),
        "notes": report.notes,
        "timings": report.timings,
    }


def cmd_reduce(args):
    full = load_system(args)
    stability = None if args.beta is None else StabilityOptions(beta=args.beta)
    opts = FrameworkOptions(r=args.r, tol=args.tol, max_outer=args.max_outer,
                            init_mode="balanced-truncation" if args.init == "bt" else "dominant-poles",
                            stability=stability, linf=_linf_opts(args))
    report = reduce(full, opts)
    outdir = Path(args.out)
    files = _write_system(report.reduced.to_descriptor(), outdir, "reduced_")
    config = {"r": args.r, "tol": args.tol, "init": args.init, "beta": args.beta,
              "grid_points": args.grid_points, "seed": args.seed}
    payload = _report_dict(report, config)
    payload["reduced_files"] = files
    with open(outdir / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2)
    print(f"final error {report.error:.12g} at omega {report.omega_star:.12g} "
          f"({report.termination}, {len(report.rows)} outer iterations)")
    print(f"report written to {outdir / 'report.json'}")
    return 0


def _resolved_sigma(args, full):
    resp = frequency_response(full)
    if getattr(args, "minus", None):
        other = _load_dir_system(args.minus, args.minus_prefix, args.seed)
        if (other.m, other.p) != (full.m, full.p):
            raise UsageError("the two systems must share input/output dimensions")
        sigma = error_curve(resp, frequency_response(other))
    else:
        sigma = error_curve(resp, lambda w: np.zeros((len(np.atleast_1d(w)), full.p, full.m)))
    finite, _ = poles(full)
    return sigma, np.abs(finite.imag)


def cmd_linf_norm(args):
    full = load_system(args)
    sigma, pole_imag = _resolved_sigma(args, full)
    res = linf_norm(sigma, opts=_linf_opts(args), pole_imag=pole_imag)
    print(f"linf norm {res.value:.12g} at omega {res.omega_star:.12g}")
    if res.degenerate:
        print(f"near-global maximizers: {', '.join(f'{w:.6g}' for w in res.maximizers)}")
    return 0


def cmd_bt(args):
    full = load_system(args)
    bt_sys, hankel = balanced_truncation(full, args.r)
    outdir = Path(args.out)
    _write_system(bt_sys, outdir, "bt_")
    with open(outdir / "hankel.json", "w") as fh:
        json.dump({"schema": REPORT_SCHEMA, "hankel": list(map(float, hankel))}, fh, indent=2)
    print(f"balanced truncation of order {args.r} written to {outdir}")
    return 0


def cmd_hankel(args):
    full = load_system(args)
    _, hankel = balanced_truncation(full, min(full.n, 1))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "hankel.json", "w") as fh:
        json.dump({"schema": REPORT_SCHEMA, "hankel": list(map(float, hankel))}, fh, indent=2)
    print(f"{len(hankel)} Hankel singular values written to {outdir / 'hankel.json'}")
    return 0


def cmd_error_curve(args):
    full = load_system(args)
    sigma, pole_imag = _resolved_sigma(args, full)
    res = linf_norm(sigma, opts=_linf_opts(args), pole_imag=pole_imag)
    cap = 10.0 * max(1.0, float(pole_imag.max()) if pole_imag.size else 1.0)
    grid = np.unique(np.concatenate([
        [0.0], np.logspace(np.log10(cap * 1e-9), np.log10(cap), args.grid_points), res.maximizers]))
    vals = sigma(grid)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "error_curve.csv", "w") as fh:
        fh.write("omega,sigma_max\n")
        for w, v in zip(grid, vals):
            fh.write(f"{float(w)!r},{float(v)!r}\n")
    with open(outdir / "maximizers.json", "w") as fh:
        json.dump({"schema": REPORT_SCHEMA, "value": res.value,
                   "omega_star": res.omega_star,
                   "maximizers": list(map(float, res.maximizers))}, fh, indent=2)
    print(f"error curve ({len(grid)} samples) written to {outdir / 'error_curve.csv'}")
    return 0


_COMMANDS = {
    "reduce": cmd_reduce,
    "linf-norm": cmd_linf_norm,
    "bt": cmd_bt,
    "hankel": cmd_hankel,
    "error-curve": cmd_error_curve,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
