"""Command-line front end.

    marginalpriv gen      --rows N --dims D [--distribution uniform|biased|fpc] --out PATH
    marginalpriv release  --mechanism NAME --db PATH --epsilon E [--delta X] --out PATH
    marginalpriv attack   --mechanism SPEC --rows N --delta X [--k auto|INT] --trials T --out PATH
    marginalpriv bounds   --dims D [D ...] --alpha A --epsilon E [--delta X]

Randomness comes from ``--seed`` (or ``$MARGINALPRIV_SEED``, else 0) mixed with a
per-subcommand label. Exit codes: 0 success, 2 usage error, 3 I/O error,
4 parameter or numeric domain error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import logging
import math
import os
import sys
from typing import Optional

import numpy as np

from . import dbio
from .attacks import auto_copy_factor, tracing_attack
from .core import Database, compute_marginals, l1_error, linf_error, sample_complexity_bounds
from .errors import DimensionError, FormatError, MarginalPrivError, ParameterError
from .fingerprinting import export_code, fpc_generate, fpc_min_length
from .harness import ExperimentRecord, Stopwatch, dumps, fmt_float
from .oracles import APPROX, PURE, make_mechanism, parse_mechanism_spec
from .rng import check_seed, make_rng

log = logging.getLogger("marginalpriv")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DOMAIN = 0, 2, 3, 4
SEED_ENV = "MARGINALPRIV_SEED"

BOUND_COLUMNS = ["d", "alpha", "epsilon", "delta",
                 "laplace_approx_upper", "laplace_pure_upper", "approx_lower", "gauss_sv_upper", "pure_lower"]


class UsageError(MarginalPrivError):
    pass


def _seed(args) -> int:
    if args.seed is not None:
        return check_seed(args.seed)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return check_seed(int(env, 0))
        except ValueError:
            raise UsageError(f"${SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _experiment_id(subcommand: str, params: dict, seed: int) -> str:
    blob = dumps({"subcommand": subcommand, "parameters": params, "seed": seed})
    return hashlib.blake2b(blob.encode(), digest_size=8).hexdigest()


def _emit(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _record(args, subcommand, params, seed, outputs, elapsed) -> str:
    rec = ExperimentRecord(_experiment_id(subcommand, params, seed), subcommand, params, seed, outputs, elapsed)
    return rec.to_json(include_timing=args.timing) + "\n"


def vector_csv(values) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", "value"])
    for j, v in enumerate(values):
        writer.writerow([j, fmt_float(v)])
    return buf.getvalue()


def table_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# --- subcommands -------------------------------------------------------------

def cmd_gen(args) -> int:
    seed = _seed(args)
    rng = make_rng(seed, "gen")
    if args.distribution == "fpc":
        if args.delta is None:
            raise UsageError("--distribution fpc needs --delta")
        d = args.dims if args.dims is not None else fpc_min_length(args.rows, args.delta)
        code = fpc_generate(args.rows, args.delta, d, rng)
        db = code.codebook
        sidecar = args.out + ".fpc"
        if args.db_format != "binary":
            raise UsageError("fpc codebooks are written in the binary format")
        export_code(code, args.out, sidecar)
    else:
        if args.dims is None:
            raise UsageError("--dims is required")
        if args.distribution == "uniform":
            p = 0.5
        else:
            if args.p is None:
                raise UsageError("--distribution biased needs --p")
            if not 0 <= args.p <= 1:
                raise ParameterError(f"--p must lie in [0, 1], got {args.p}")
            p = args.p
        if args.rows < 1 or args.dims < 1:
            raise ParameterError("--rows and --dims must be >= 1")
        db = Database.random(args.rows, args.dims, rng, p)
        dbio.save_database(db, args.out, args.db_format)
    log.info("wrote %s (n=%d, d=%d)", args.out, db.n, db.d)
    return EXIT_OK


def cmd_release(args) -> int:
    seed = _seed(args)
    name = args.mechanism
    if name in PURE and args.delta not in (None, 0):
        raise UsageError(f"{name} is pure DP; do not pass --delta")
    if name in APPROX and not args.delta:
        raise UsageError(f"{name} requires --delta > 0")
    options = {"calibration": args.calibration, "sigma_override": args.sigma,
               "alpha_override": args.alpha, "sv_c_override": args.sv_c}
    mech = make_mechanism(name, epsilon=args.epsilon, delta=args.delta, **options)
    db = dbio.load_database(args.db)
    with Stopwatch() as sw:
        released = mech(db, make_rng(seed, f"release/{name}"))
    true = compute_marginals(db)
    if args.format == "json":
        _emit(dumps({"values": released.values}) + "\n", args.out)
    else:
        _emit(vector_csv(released.values), args.out)
    params = {"mechanism": name, "db": os.path.basename(args.db), "n": db.n, "d": db.d,
              "epsilon": args.epsilon, "delta": args.delta}
    params.update({k: v for k, v in mech.options.items()})
    outputs = {"l1_error": l1_error(released, true), "linf_error": linf_error(released, true)}
    _emit(_record(args, "release", params, seed, outputs, sw.elapsed), args.summary)
    log.info("release took %.3fs", sw.elapsed)
    return EXIT_OK


def cmd_attack(args) -> int:
    seed = _seed(args)
    mech = parse_mechanism_spec(args.mechanism)
    if args.k == "auto":
        k = auto_copy_factor(args.rows, args.delta)
    else:
        try:
            k = int(args.k)
        except ValueError:
            raise UsageError(f"--k must be 'auto' or an integer, got {args.k!r}") from None
    params = {"mechanism": args.mechanism, "n": args.rows, "delta": args.delta, "k": k,
              "trials": args.trials, "d": args.dims, "excluded": args.excluded}
    if args.trials < 0:
        raise ParameterError("--trials must be >= 0")
    if args.trials == 0:
        _emit("", args.out)
        return EXIT_OK
    with Stopwatch() as sw:
        report = tracing_attack(mech, args.rows, args.delta, k, args.trials, seed,
                                d=args.dims, excluded=args.excluded, jobs=args.jobs)
    lines = [dumps({"record": "trial", "seed": seed, **r.as_dict()}) for r in report.records]
    summary = report.summary()
    summary["config"] = params
    if args.timing:
        summary["duration_s"] = sw.elapsed
    lines.append(dumps(summary))
    _emit("\n".join(lines) + "\n", args.out)
    log.info("attack: k=%d n_k=%d d=%d trace rate %.4f (%.2fs)", k, report.n_k, report.d,
             report.trace_nonempty_rate, sw.elapsed)
    return EXIT_OK


def cmd_bounds(args) -> int:
    rows = []
    for d in args.dims:
        b = sample_complexity_bounds(d, args.alpha, args.epsilon, args.delta)
        rows.append({
            "d": str(d), "alpha": fmt_float(args.alpha), "epsilon": fmt_float(args.epsilon),
            "delta": fmt_float(args.delta),
            "laplace_approx_upper": fmt_float(b.laplace_approx_upper),
            "laplace_pure_upper": fmt_float(b.laplace_pure_upper),
            "approx_lower": fmt_float(b.approx_lower),
            "gauss_sv_upper": fmt_float(b.gauss_sv_upper),
            "pure_lower": fmt_float(b.pure_lower),
        })
    if args.format == "json":
        _emit("\n".join(dumps(r) for r in rows) + "\n", args.out)
    else:
        _emit(table_csv(BOUND_COLUMNS, [[r[c] for c in BOUND_COLUMNS] for r in rows]), args.out)
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help=f"u64 master seed (fallback ${SEED_ENV}, then 0)")
    p.add_argument("--out", default=None, help="output path ('-' or omitted: stdout)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for independent trials")
    p.add_argument("--timing", action="store_true", help="include wall-clock duration in records")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marginalpriv", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a +/-1 database")
    _add_common(g)
    g.add_argument("--rows", type=int, required=True)
    g.add_argument("--dims", type=int, default=None)
    g.add_argument("--distribution", choices=("uniform", "biased", "fpc"), default="uniform")
    g.add_argument("--p", type=float, default=None, help="+1 probability for 'biased'")
    g.add_argument("--delta", type=float, default=None, help="soundness for 'fpc'")
    g.add_argument("--db-format", choices=("binary", "text"), default="binary")
    g.set_defaults(func=cmd_gen, needs_out=True)

    r = sub.add_parser("release", help="release marginals of a database")
    _add_common(r)
    r.add_argument("--mechanism", choices=("laplace", "gaussian", "linf", "gauss-sv"), required=True)
    r.add_argument("--db", required=True)
    r.add_argument("--epsilon", type=float, required=True)
    r.add_argument("--delta", type=float, default=None)
    r.add_argument("--calibration", choices=("paper", "analytic"), default="paper")
    r.add_argument("--sigma", type=float, default=None, help="gauss-sv: override sigma")
    r.add_argument("--alpha", type=float, default=None, help="gauss-sv: override alpha")
    r.add_argument("--sv-c", type=int, default=None, help="gauss-sv: override the sparse-vector c")
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--summary", default=None, help="JSON summary path (default stdout)")
    r.set_defaults(func=cmd_release, needs_out=True)

    a = sub.add_parser("attack", help="run the k-copy tracing attack")
    _add_common(a)
    a.add_argument("--mechanism", required=True, help="name[:key=value,...], e.g. linf:epsilon=1")
    a.add_argument("--rows", type=int, required=True, help="database size n seen by the mechanism")
    a.add_argument("--delta", type=float, required=True, help="code soundness")
    a.add_argument("--k", default="auto")
    a.add_argument("--trials", type=int, default=100)
    a.add_argument("--dims", type=int, default=None, help="code length (default: minimum)")
    a.add_argument("--excluded", type=int, default=0)
    a.set_defaults(func=cmd_attack, needs_out=False)

    b = sub.add_parser("bounds", help="tabulate sample-complexity formulas")
    _add_common(b)
    b.add_argument("--dims", type=int, nargs="+", required=True)
    b.add_argument("--alpha", type=float, required=True)
    b.add_argument("--epsilon", type=float, required=True)
    b.add_argument("--delta", type=float, default=None)
    b.add_argument("--format", choices=("csv", "json"), default="csv")
    b.set_defaults(func=cmd_bounds, needs_out=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "needs_out", False) and not args.out:
        print(f"marginalpriv {args.command}: --out is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"marginalpriv {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FormatError, DimensionError) as exc:
        print(f"marginalpriv {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ParameterError, ArithmeticError, MemoryError) as exc:
        print(f"marginalpriv {args.command}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
