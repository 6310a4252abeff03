"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 solver non-convergence.
Set ``LOCASSO_LOG`` (e.g. ``DEBUG``) to change the log level.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import secrets
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from .design import EmptyWindowError
from .io import DataFormatError, load_experiment_config, read_constants, read_dataset
from .kernels import (ESTIMATION_KERNELS, SELECTION, SELECTION_KERNELS,
                      ValidationUnavailable, QuadratureError, selection_kernel_bounds,
                      get_kernel, moment_matrix, validate_estimation_kernel)
from .lpe import LpeConfig, estimate_f, fit_local_polynomial, two_stage_estimate
from .selection import (ComplianceError, SelectionConfig, SelectionNotConverged,
                        choose_parameters, penalty_for, select)

log = logging.getLogger("locasso")

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2


class UsageError(Exception):
    pass


def _parse_vector(text: str, d: int) -> np.ndarray:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise UsageError(f"cannot parse point {text!r}") from None
    if len(vals) == 1 and d > 1:
        vals = vals * d
    if len(vals) != d:
        raise UsageError(f"--x has {len(vals)} entries, data has {d} columns")
    return np.array(vals)


def _parse_selected(text: str, d: int) -> tuple:
    if text.strip() == "":
        return ()
    try:
        sel = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"cannot parse --selected {text!r}") from None
    bad = [j for j in sel if not 1 <= j <= d]
    if bad:
        raise UsageError(f"--selected coordinates {bad} outside 1..{d}")
    return sel


def _load_constants(args):
    if not args.constants_file:
        return None
    try:
        return read_constants(args.constants_file)
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
        raise UsageError(f"constants file {args.constants_file}: {exc}") from None


def _selection_config(args, d: int) -> SelectionConfig:
    constants = _load_constants(args)
    strict = args.strict
    if strict and constants is None:
        raise UsageError("--strict needs --constants-file")
    solver = {"max_iter": args.max_iter, "kkt_tol": args.kkt_tol}
    if args.h is None:
        if constants is None:
            raise UsageError("give --h (and --lambda), or --strict with --constants-file")
        cfg = choose_parameters(constants, args.h_fraction, args.procedure, strict=strict)
        return replace(cfg, **solver)
    if args.lam is None:
        if constants is None:
            raise UsageError("--lambda is required without a constants file")
        lam = penalty_for(constants, args.h)
    else:
        lam = args.lam
    if args.procedure == "translated" and constants is None:
        raise UsageError("the translated procedure needs --constants-file (f_max, C)")
    return SelectionConfig(h=args.h, lam=lam, procedure=args.procedure,
                           constants=constants, strict=strict, **solver)


def _emit(payload: dict, args, stdout):
    if args.format == "csv":
        buf = io.StringIO()
        flat = {k: (" ".join(map(str, v)) if isinstance(v, (list, tuple)) else v)
                for k, v in payload.items() if not isinstance(v, dict)}
        w = csv.DictWriter(buf, fieldnames=list(flat), lineterminator="\n")
        w.writeheader()
        w.writerow(flat)
        text = buf.getvalue()
    else:
        text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        stdout.write(text)


def cmd_select(args, stdout, stderr) -> int:
    data = read_dataset(args.data)
    x = _parse_vector(args.x, data.d)
    cfg = _selection_config(args, data.d)
    k = get_kernel(args.kernel, data.d)
    code = EXIT_OK
    try:
        out = select(data, x, cfg, k, record_trace=bool(args.trace))
    except SelectionNotConverged as exc:
        out, code = exc.outcome, EXIT_NOT_CONVERGED
        stderr.write(f"warning: {exc}\n")
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sweep", "objective", "kkt_residual"])
            for row in out.solution.trace:
                w.writerow([row[0], repr(row[1]), repr(row[2])])
    _emit(out.to_dict(), args, stdout)
    return code


def cmd_estimate(args, stdout, stderr) -> int:
    data = read_dataset(args.data)
    x = _parse_vector(args.x, data.d)
    if args.auto_select:
        cfg = _selection_config(args, data.d)
        try:
            res = two_stage_estimate(data, x, cfg, args.beta, args.fmax,
                                     kernel_star=args.kernel_star, bandwidth_star=args.hstar)
        except SelectionNotConverged as exc:
            stderr.write(f"error: {exc}\n")
            return EXIT_NOT_CONVERGED
        _emit(res.to_dict(), args, stdout)
        return EXIT_OK
    if args.selected is None:
        raise UsageError("give --selected or --auto-select")
    sel = _parse_selected(args.selected, data.d)
    cfg = LpeConfig(beta=args.beta, selected=sel, f_max=args.fmax,
                    kernel_star=get_kernel(args.kernel_star, len(sel)),
                    bandwidth_star=args.hstar)
    fit = fit_local_polynomial(data, x, cfg)
    _emit({"fhat": estimate_f(fit, args.fmax), "selected": list(sel),
           "unique": fit.unique, "hstar": fit.bandwidth}, args, stdout)
    return EXIT_OK


def cmd_experiment(args, stdout, stderr) -> int:
    from .experiment import run_experiment

    try:
        cfg = load_experiment_config(args.config)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            lines.append(f"  {loc}: {err['msg']} (got {err.get('input')!r})")
        raise UsageError("invalid experiment config:\n" + "\n".join(lines)) from None
    seed = args.seed
    if seed is None:
        seed = secrets.randbits(63)
        stderr.write(f"no --seed given; using seed {seed}\n")
    out_dir = Path(args.out or "experiment_out")
    summary, paths = run_experiment(cfg, seed, out_dir, jobs=args.jobs,
                                    progress=lambda m: stderr.write(m + "\n"))
    stderr.write(f"wrote {paths.csv}, {paths.summary}, {paths.manifest}\n")
    brief = {"summary": str(paths.summary), "csv": str(paths.csv),
             "manifest": str(paths.manifest), "seed": seed}
    if summary.rate_slope is not None:
        brief["rate_slope"] = summary.rate_slope
    if summary.recovery_rate is not None:
        brief["recovery_rate"] = summary.recovery_rate
    stdout.write(json.dumps(brief) + "\n")
    return EXIT_OK


def cmd_validate_kernel(args, stdout, stderr) -> int:
    k = get_kernel(args.kernel, args.dim)
    report = {"kernel": k.name, "dimension": k.dimension, "stage": k.stage}
    if k.stage == SELECTION:
        try:
            M = moment_matrix(k, tol=args.tol)
            off = M - np.diag(np.diag(M))
            q = selection_kernel_bounds(k)
            report.update({
                "status": "ok",
                "moment_diagonal": np.diag(M).tolist(),
                "max_off_diagonal": float(np.abs(off).max()),
                "diagonal": bool(np.abs(off).max() <= args.tol),
                "M_K": k.M_K,
                "bounded_quantities": q,
                "M_K_dominates": all(v <= k.M_K * (1 + 1e-9) for v in q.values()),
            })
        except (ValidationUnavailable, QuadratureError) as exc:
            report.update({"status": "validation unavailable", "reason": str(exc)})
    else:
        report.update({"status": "ok", **validate_estimation_kernel(k, args.beta, args.tol).to_dict()})
    _emit(report, args, stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="locasso", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--seed", type=int, default=None, help="master seed for experiments")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker threads for experiment replicates")
    p.add_argument("--out", default=None, help="output file (select/estimate) or directory (experiment)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    sub = p.add_subparsers(dest="command", required=True)

    def selection_flags(sp):
        sp.add_argument("--h", type=float, default=None, help="selection bandwidth")
        sp.add_argument("--lambda", dest="lam", type=float, default=None)
        sp.add_argument("--strict", "--strict-from-constants", dest="strict", action="store_true",
                        help="enforce the bandwidth bound and penalty rule from the constants file")
        sp.add_argument("--h-fraction", type=float, default=0.9,
                        help="h as a fraction of its strict upper bound (when --h is omitted)")
        sp.add_argument("--procedure", choices=("plain", "translated"), default="translated")
        sp.add_argument("--constants-file", default=None)
        sp.add_argument("--kernel", choices=sorted(SELECTION_KERNELS), default="uniform")
        sp.add_argument("--max-iter", type=int, default=100_000, help="solver sweep limit")
        sp.add_argument("--kkt-tol", type=float, default=1e-8, help="solver optimality tolerance")

    s = sub.add_parser("select", help="select relevant coordinates at a point")
    s.add_argument("--data", required=True)
    s.add_argument("--x", required=True, help="query point, comma separated")
    selection_flags(s)
    s.add_argument("--trace", default=None, help="write per-sweep objective and KKT residual as CSV")
    s.set_defaults(func=cmd_select)

    e = sub.add_parser("estimate", help="estimate f at a point")
    e.add_argument("--data", required=True)
    e.add_argument("--x", required=True)
    e.add_argument("--beta", type=float, default=2.0)
    e.add_argument("--fmax", type=float, required=True)
    g = e.add_mutually_exclusive_group()
    g.add_argument("--selected", default=None, help="comma separated coordinates (1-based); '' for none")
    g.add_argument("--auto-select", action="store_true")
    e.add_argument("--kernel-star", choices=sorted(ESTIMATION_KERNELS), default="gaussian_trunc")
    e.add_argument("--hstar", type=float, default=None, help="override n^(-1/(2 beta + d))")
    selection_flags(e)
    e.set_defaults(func=cmd_estimate)

    x = sub.add_parser("experiment", help="run a Monte Carlo experiment from a JSON config")
    x.add_argument("--config", required=True)
    x.set_defaults(func=cmd_experiment)

    v = sub.add_parser("validate-kernel", help="check kernel moment and integrability conditions")
    v.add_argument("--kernel", required=True,
                   choices=sorted(SELECTION_KERNELS) + sorted(ESTIMATION_KERNELS))
    v.add_argument("--dim", type=int, required=True)
    v.add_argument("--beta", type=float, default=2.0)
    v.add_argument("--tol", type=float, default=1e-8)
    v.set_defaults(func=cmd_validate_kernel)
    return p


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    logging.basicConfig(level=os.environ.get("LOCASSO_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args, stdout, stderr)
    except (UsageError, ComplianceError, DataFormatError, EmptyWindowError,
            OSError, ValueError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
