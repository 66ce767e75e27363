"""Command-line front end (``commonshock``).

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Randomness comes from numpy's PCG64 generator seeded with ``--seed``.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import closures
from .cdph import (
    DEFAULT_SHIFT,
    CdphParams,
    cdph_sample_many,
    covariance,
    from_basic,
    joint_pgf,
    pmf_grid,
    shifted_moment,
    shifted_pmf,
    support_bounds,
)
from .dph import dph_factorial_moment, dph_mean, dph_pgf, dph_pmf
from .estimate import EmConfig, em_fit
from .experiments import (
    COUNT_SHIFT,
    STUDIES,
    BivPoissonSpec,
    PoissonLindleySpec,
    run_study,
    sample_biv_poisson_counts,
    sample_poisson_lindley_counts,
    study_data,
    write_csv,
    write_grid_csv,
    write_json,
    write_report,
    write_trace_csv,
)
from .files import (
    DataFormatError,
    read_frequency_table,
    read_model,
    read_pairs_csv,
    write_model,
    write_pairs_csv,
)
from .linalg import NumericalError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

log = logging.getLogger("commonshock")


class UsageError(Exception):
    pass


def _fmt(x):
    return format(float(x), ".17g")


def _output_dir(args):
    if args.output_dir is None:
        raise UsageError(f"{args.command} needs --output-dir")
    path = Path(args.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _read_data(args, shift):
    if args.input is None:
        raise UsageError(f"{args.command} needs --input")
    reader = read_frequency_table if args.table else read_pairs_csv
    return reader(args.input, shift)


def _fit_provenance(result):
    return {
        "seed": result.config.seed,
        "iterations": int(result.trace.size),
        "log_likelihood": float(result.trace[-1]),
        "init_retries": result.retries,
    }


def cmd_fit(args):
    data = _read_data(args, tuple(args.shift))
    out = _output_dir(args)
    config = EmConfig(dims=tuple(args.dims), max_iters=args.iters, seed=args.seed)
    result = em_fit(data, config)
    write_model(out / "model.json", result.params, _fit_provenance(result))
    write_trace_csv(out / "trace.csv", result.trace)
    print(f"log-likelihood {_fmt(result.trace[-1])} after {result.trace.size} iterations")
    return EXIT_OK


def _ints(values, count, what):
    if len(values) != count:
        raise UsageError(f"{what} takes {count} argument(s), got {len(values)}")
    try:
        out = [float(v) for v in values]
    except ValueError:
        raise UsageError(f"{what} arguments must be numbers: {values}") from None
    return out


def _eval_cdph(params, query, vals, args):
    if query == "pmf":
        x1, x2 = _ints(vals, 2, "pmf")
        try:
            return shifted_pmf(params, x1, x2)
        except ValueError:
            return 0.0
    if query == "pgf":
        z1, z2 = _ints(vals, 2, "pgf")
        if not (0 <= z1 <= 1 and 0 <= z2 <= 1):
            raise UsageError("pgf arguments must lie in [0, 1]")
        return joint_pgf(params, z1, z2)
    if query == "moment":
        r1, r2 = _ints(vals, 2, "moment")
        if min(r1, r2) < 0 or r1 != int(r1) or r2 != int(r2):
            raise UsageError("moment orders must be non-negative integers")
        return shifted_moment(params, int(r1), int(r2))
    if query == "cov":
        _ints(vals, 0, "cov")
        c1, _, c2, _ = params.shift
        return c1 * c2 * covariance(params)
    if query in ("min-pmf", "max-pmf", "sum-pmf"):
        (n,) = _ints(vals, 1, query)
        build = {"min-pmf": closures.min_dph, "max-pmf": closures.max_dph, "sum-pmf": closures.sum_dph}[query]
        if n != int(n):
            raise UsageError(f"{query} takes an integer step count")
        return dph_pmf(build(params), int(n)) if n >= 1 else 0.0
    if query in ("min-mean", "max-mean", "sum-mean"):
        _ints(vals, 0, query)
        build = {"min-mean": closures.min_dph, "max-mean": closures.max_dph, "sum-mean": closures.sum_dph}[query]
        return dph_mean(build(params))
    if query == "grid":
        _ints(vals, 0, "grid")
        out = _output_dir(args)
        N1, N2 = support_bounds(params, args.trunc_tol)
        F = pmf_grid(params, N1, N2)[2:, 2:]
        x1, x2 = from_basic(params, np.arange(2, N1 + 1), np.arange(2, N2 + 1))
        write_grid_csv(out / "pmf_grid.csv", x1, x2, F)
        return float(F.sum())
    raise UsageError(f"unknown query {query!r} for a CDPH model")


def _eval_dph(params, query, vals):
    if query == "pmf":
        (n,) = _ints(vals, 1, "pmf")
        return dph_pmf(params, int(n)) if n >= 1 and n == int(n) else 0.0
    if query == "pgf":
        (z,) = _ints(vals, 1, "pgf")
        if not 0 <= z <= 1:
            raise UsageError("pgf argument must lie in [0, 1]")
        return dph_pgf(params, z)
    if query == "moment":
        (r,) = _ints(vals, 1, "moment")
        if r < 1 or r != int(r):
            raise UsageError("factorial moment order must be a positive integer")
        return dph_factorial_moment(params, int(r))
    raise UsageError(f"unknown query {query!r} for a DPH model")


def cmd_eval(args):
    if args.input is None:
        raise UsageError("eval needs --input MODEL.json")
    params, _ = read_model(args.input)
    if isinstance(params, CdphParams):
        value = _eval_cdph(params, args.query, args.values, args)
    else:
        value = _eval_dph(params, args.query, args.values)
    print(_fmt(value))
    return EXIT_OK


def _emit_rows(args, header, columns):
    rows = zip(*columns)
    if args.output_dir is None:
        print(",".join(header))
        for row in rows:
            print(",".join(str(v) for v in row))
    else:
        write_csv(_output_dir(args) / "draws.csv", header, rows)


def cmd_simulate(args):
    rng = np.random.default_rng(args.seed)
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    if args.generator == "model":
        if args.input is None:
            raise UsageError("simulate --generator model needs --input MODEL.json")
        params, _ = read_model(args.input)
        if not isinstance(params, CdphParams):
            raise DataFormatError(f"{args.input}: simulation needs a CDPH model")
        t1, t2, m, z1, z2 = cdph_sample_many(params, args.count, rng)
        x1, x2 = from_basic(params, t1, t2)
        header = ["n1", "n2"]
        cols = [_lattice_column(x1), _lattice_column(x2)]
        if args.latent:
            header += ["tau1", "tau2", "m", "z1", "z2"]
            cols += [t1, t2, m, z1, z2]
        _emit_rows(args, header, cols)
        return EXIT_OK
    if args.latent:
        raise UsageError("--latent applies to --generator model only")
    if args.generator == "biv-poisson":
        spec = BivPoissonSpec.from_marginals(args.lambda_n1, args.lambda_n2, args.lambda_z)
        n1, n2 = sample_biv_poisson_counts(spec, args.count, rng)
    elif args.generator == "poisson-lindley":
        spec = PoissonLindleySpec(args.theta, *args.rates)
        n1, n2 = sample_poisson_lindley_counts(spec, args.count, rng)
    else:
        raise UsageError(f"unknown generator {args.generator!r}")
    _emit_rows(args, ["n1", "n2"], [n1, n2])
    return EXIT_OK


def _lattice_column(x):
    x = np.asarray(x, dtype=float)
    if np.all(x == np.rint(x)):
        return x.astype(np.int64)
    return [_fmt(v) for v in x]


def cmd_construct(args):
    if not args.input:
        raise UsageError("construct needs --input MODEL.json [MODEL.json ...]")
    models = [read_model(p)[0] for p in args.input]
    for path, m in zip(args.input, models):
        if not isinstance(m, CdphParams):
            raise DataFormatError(f"{path}: construct needs CDPH inputs")
    op = args.op
    if op in ("min", "max", "sum"):
        if len(models) != 1:
            raise UsageError(f"{op} takes exactly one input model")
        result = {"min": closures.min_dph, "max": closures.max_dph, "sum": closures.sum_dph}[op](models[0])
    elif op == "mixture":
        weights = args.weights if args.weights is not None else []
        if len(weights) != len(models):
            raise UsageError(f"mixture needs one weight per input ({len(models)}), got {len(weights)}")
        try:
            result = closures.mixture(zip(weights, models))
        except ValueError as exc:
            raise DataFormatError(str(exc)) from None
    elif op == "vecsum":
        if len(models) != 2:
            raise UsageError("vecsum takes exactly two input models")
        try:
            result = closures.sum_of_vectors(*models)
        except ValueError as exc:
            raise DataFormatError(str(exc)) from None
    else:
        raise UsageError(f"unknown operation {op!r}")
    out = _output_dir(args)
    write_model(out / "model.json", result, {"operation": op, "inputs": [Path(p).name for p in args.input]})
    dims = list(result.dims) if isinstance(result, CdphParams) else [result.dim]
    print(f"{op}: {'cdph' if isinstance(result, CdphParams) else 'dph'} model with dims {dims}")
    return EXIT_OK


def cmd_reproduce(args):
    out = _output_dir(args)
    data = None
    if args.study == "userdata":
        if args.input is None:
            raise UsageError("reproduce userdata needs --input")
        shift = tuple(args.shift) if args.shift_given else COUNT_SHIFT
        data = _read_data(args, shift)
    elif args.input is not None:
        raise UsageError(f"study {args.study} generates its own data; drop --input")
    data = study_data(args.study, args.seed, data=data)
    write_pairs_csv(out / "data.csv", data)
    results = run_study(data, args.seed, max_iters=args.iters)
    summary = {"study": args.study, "seed": args.seed, "iterations": args.iters,
               "observations": data.size, "fits": {}}
    for dims, (result, report) in results.items():
        sub = out / f"dims_{dims[0]}_{dims[1]}"
        sub.mkdir(exist_ok=True)
        write_model(sub / "model.json", result.params, _fit_provenance(result))
        write_trace_csv(sub / "trace.csv", result.trace)
        write_report(report, sub)
        summary["fits"][f"{dims[0]},{dims[1]}"] = {
            "log_likelihood": float(result.trace[-1]),
            "tv_distance": report.tv_distance,
        }
        print(f"dims {dims}: log-likelihood {_fmt(result.trace[-1])}, TV {report.tv_distance:.4f}")
    write_json(out / "summary.json", summary)
    return EXIT_OK


class _ShiftAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        namespace.shift_given = True


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", help="directory for output files")
    common.add_argument("--seed", type=int, default=0, help="PCG64 seed (default 0)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="commonshock", description="Common-shock bivariate DPH toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_flags(p):
        p.add_argument("--input", help="count data: CSV with n1,n2[,weight] columns, or a table with --table")
        p.add_argument("--dims", type=int, nargs=2, metavar=("E", "S"), default=(2, 1))
        p.add_argument("--iters", type=int, default=500)
        p.add_argument("--shift", type=float, nargs=4, metavar=("C1", "K1", "C2", "K2"),
                       default=list(DEFAULT_SHIFT), action=_ShiftAction)
        p.add_argument("--table", action="store_true",
                       help="read --input as a two-way frequency table (n1 down, n2 across)")
        p.set_defaults(shift_given=False)

    p = sub.add_parser("fit", parents=[common], help="fit a CDPH model by EM")
    data_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model file")
    p.add_argument("--input", help="model file")
    p.add_argument("query", choices=["pmf", "pgf", "moment", "cov", "min-pmf", "max-pmf", "sum-pmf",
                                      "min-mean", "max-mean", "sum-mean", "grid"])
    p.add_argument("values", nargs="*")
    p.add_argument("--trunc-tol", type=float, default=1e-12)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", parents=[common], help="draw samples")
    p.add_argument("--input", help="model file for --generator model")
    p.add_argument("--generator", choices=["model", "biv-poisson", "poisson-lindley"], default="model")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--latent", action="store_true", help="add tau1,tau2,m,z1,z2 columns")
    p.add_argument("--lambda-n1", type=float, default=5.0)
    p.add_argument("--lambda-n2", type=float, default=4.0)
    p.add_argument("--lambda-z", type=float, default=2.0)
    p.add_argument("--theta", type=float, default=2.0)
    p.add_argument("--rates", type=float, nargs=2, default=(2.0, 3.0))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("construct", parents=[common], help="closure constructions")
    p.add_argument("op", choices=["min", "max", "sum", "mixture", "vecsum"])
    p.set_defaults(func=cmd_construct)
    p.add_argument("--input", nargs="+", help="one or more model files")
    p.add_argument("--weights", type=float, nargs="+")

    p = sub.add_parser("reproduce", parents=[common], help="rerun a study end to end")
    p.add_argument("study", choices=sorted(STUDIES))
    data_flags(p)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "dims", None) is not None and min(args.dims) < 1:
            raise UsageError("--dims must be >= 1 1")
        if getattr(args, "iters", 1) < 1:
            raise UsageError("--iters must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, RuntimeError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataFormatError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entry_point():
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
