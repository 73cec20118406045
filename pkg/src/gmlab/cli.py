"""Command-line front end: ``gmlab {analyze,counterexample,refute,simulate}``.

Exit codes: 0 success/pass, 1 usage or invalid input, 2 I/O error,
3 no counterexample found, 4 refutation found.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from gmlab import __version__
from gmlab.core import CovarianceSpec, DesignMatrix
from gmlab.errors import GMLabError, IoError
from gmlab.io import SCHEMA_VERSION, dumps, load_json, read_matrix
from gmlab.koopmann import QuadraticEstimator, solve_h_space
from gmlab.lab import (
    DEFAULT_SEED,
    DEFAULT_SKEW_P,
    EX2_H,
    STRATEGIES,
    ComparisonReport,
    example_ex1,
    example_ex2,
    search_counterexample,
)
from gmlab.montecarlo import simulate_report
from gmlab.refuter import (
    as_black_box,
    builtin_estimator,
    check_fstar_unbiasedness,
    refute_f2_unbiasedness,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NOT_FOUND = 3
EXIT_REFUTED = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    seed: int
    reps: int | None = None
    budget: int | None = None
    inputs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    version: str = __version__

    def to_dict(self):
        return asdict(self)


def _u64(text):
    try:
        val = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return val


def _resolve_seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("GMLAB_SEED")
    if env:
        try:
            return _u64(env)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"GMLAB_SEED: {exc}") from None
    return DEFAULT_SEED


def _load_design(args):
    if args.design is None:
        raise UsageError("--design is required unless --builtin is given")
    return DesignMatrix(read_matrix(args.design))


def _emit(doc, args, table):
    text = dumps(doc) if args.format == "json" else table
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise IoError(str(exc.strerror or exc), args.out) from exc
    else:
        sys.stdout.write(text)


def _doc(config, result):
    return {"schema_version": SCHEMA_VERSION, "command": config.command, "config": config.to_dict(), "result": result}


def _table(title, rows):
    width = max((len(k) for k, _ in rows), default=0)
    lines = [title, "-" * max(len(title), 8)]
    for key, val in rows:
        if isinstance(val, float):
            val = f"{val:.12g}"
        lines.append(f"{key.ljust(width)}  {val}")
    return "\n".join(lines) + "\n"


def _report_rows(rep):
    rows = [
        ("c", np.array2string(np.asarray(rep.c), precision=6)),
        ("cov_term", rep.cov_term),
        ("quad_var", rep.quad_var),
        ("alpha_star", rep.alpha_star),
        ("var_ols", rep.var_ols),
        ("var_alpha_star", rep.var_alpha_star),
        ("improvement", rep.improvement),
    ]
    if rep.enumerated_var_alpha_star is not None:
        rows.append(("enumerated_var_alpha_star", rep.enumerated_var_alpha_star))
        rows.append(("recentering_valid", rep.recentering_valid))
    if rep.note:
        rows.append(("note", rep.note))
    return rows


def cmd_analyze(args):
    seed = _resolve_seed(args)
    extra = {}
    if args.builtin == "ex1":
        design = DesignMatrix.location(args.n)
    elif args.builtin == "ex2":
        design = example_ex2().design
    else:
        design = _load_design(args)
    basis = solve_h_space(design)
    if args.builtin == "ex2":
        extra["example_h_residual"] = basis.residual(EX2_H)
        extra["example_h_in_span"] = bool(extra["example_h_residual"] < 1e-10)
    n = design.n
    result = {
        "n": n,
        "k": design.k,
        "symmetric_dim": n * (n + 1) // 2,
        "constraint_rank": basis.constraint_rank,
        "dim": basis.dim,
        "location_iid_null": design.is_location(),
        **extra,
    }
    if args.with_basis:
        result["basis"] = basis.to_dict()["basis"]
    config = RunConfig(
        "analyze",
        seed,
        inputs={"design": args.design, "builtin": args.builtin},
        params={"n": args.n if args.builtin == "ex1" else None},
        tolerances={"nullspace_rtol": 1e-10},
    )
    rows = [(k, v) for k, v in result.items() if k != "basis"]
    _emit(_doc(config, result), args, _table("H-space analysis", rows))
    return EXIT_OK


def cmd_counterexample(args):
    seed = _resolve_seed(args)
    p = 0.5 if args.symmetric else args.p
    if args.builtin == "ex1":
        gamma = 0.0 if args.symmetric else args.gamma
        report = example_ex1(args.n, gamma).report
        params = {"builtin": "ex1", "n": args.n, "gamma": gamma}
    elif args.builtin == "ex2":
        report = example_ex2(p).report
        params = {"builtin": "ex2", "p": p}
    else:
        design = _load_design(args)
        report = search_counterexample(design, args.strategy, args.budget, seed, p=p, symmetric=args.symmetric)
        params = {"strategy": args.strategy, "p": p, "symmetric": args.symmetric}
    found = report is not None and report.improvement > 0
    config = RunConfig(
        "counterexample",
        seed,
        budget=args.budget if args.builtin is None else None,
        inputs={"design": args.design},
        params=params,
        tolerances={"not_found": 1e-10, "degenerate_quad": 1e-14},
    )
    result = {"found": found, "report": report}
    if report is None:
        table = _table("Counterexample search", [("found", False)])
    else:
        table = _table(f"Counterexample: {report.label}", [("found", found)] + _report_rows(report))
    _emit(_doc(config, result), args, table)
    return EXIT_OK if found else EXIT_NOT_FOUND


def _parse_estimator(spec, design, args):
    if spec.startswith("builtin:"):
        rest = spec[len("builtin:"):]
        name, _, idx = rest.partition(":")
        if name == "hansen-tilde":
            i, j = args.i, args.j
            if idx:
                try:
                    i, j = (int(v) for v in idx.split(","))
                except ValueError:
                    raise UsageError(f"bad hansen-tilde indices {idx!r}; expected i,j") from None
            a = None if args.a is None else [float(v) for v in args.a.split(",")]
            return builtin_estimator("hansen-tilde", design, i=i, j=j, a=a)
        if name == "gls":
            sigma = None if args.sigma is None else read_matrix(args.sigma, (design.n, design.n))
            return builtin_estimator("gls", design, sigma=None if sigma is None else CovarianceSpec(1.0, sigma))
        if name == "ols":
            return builtin_estimator("ols", design)
        raise UsageError(f"unknown builtin estimator {name!r}")
    if spec.startswith("file:"):
        est = QuadraticEstimator.from_dict(load_json(spec[len("file:"):]))
        if est.n != design.n:
            raise UsageError(f"estimator expects n={est.n}, design has n={design.n}")
        return as_black_box(est, spec)
    raise UsageError(f"estimator spec must start with builtin: or file:, got {spec!r}")


def cmd_refute(args):
    seed = _resolve_seed(args)
    if args.builtin in ("ex1", "ex2"):
        ex = example_ex1(args.n) if args.builtin == "ex1" else example_ex2()
        design, est = ex.design, as_black_box(ex.estimator, args.builtin)
        spec = f"builtin:{args.builtin}"
    else:
        design = _load_design(args)
        spec = args.estimator or (f"builtin:{args.builtin}" if args.builtin else None)
        if spec is None:
            raise UsageError("give --estimator SPEC or --builtin NAME")
        est = _parse_estimator(spec, design, args)
    ref = refute_f2_unbiasedness(est, design, args.budget, seed)
    result = {"estimator": est.label, "verdict": "pass" if ref is None else "refutation", "refutation": ref}
    notes = []
    if est.meta.get("coincides_with_ols"):
        notes.append("coincides with OLS")
    if "i" in est.meta and args.fstar:
        chk = check_fstar_unbiasedness(est, design, args.budget, seed)
        result["fstar"] = {
            "independent_pass": chk.passed,
            "max_independent_bias": chk.max_independent_bias,
            "independent_refutation": chk.independent,
            "correlated_refutation": chk.correlated,
        }
    if ref is None:
        notes.append(f"no refutation within budget {args.budget}; this is not a proof of unbiasedness")
    result["notes"] = notes
    config = RunConfig(
        "refute",
        seed,
        budget=args.budget,
        inputs={"design": args.design, "estimator": spec, "sigma": args.sigma},
        params={"n": args.n if args.builtin == "ex1" else None},
        tolerances={"refute": 1e-8, "fstar": 1e-10},
    )
    rows = [("estimator", est.label), ("verdict", result["verdict"])]
    if ref is not None:
        rows += [("probe", ref.kind), ("deviation", ref.norm)]
    rows += [("note", n) for n in notes]
    _emit(_doc(config, result), args, _table("Refutation search", rows))
    return EXIT_OK if ref is None else EXIT_REFUTED


def cmd_simulate(args):
    seed = _resolve_seed(args)
    data = load_json(args.report)
    if "result" in data:
        data = data["result"]
    if "report" in data:
        data = data["report"]
    if data is None:
        raise UsageError("report file holds no report")
    try:
        report = ComparisonReport.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise IoError(f"not a comparison report ({exc})", args.report) from exc
    mc = simulate_report(report, args.reps, seed, workers=args.workers)
    report.mc_confirmation = mc
    config = RunConfig(
        "simulate",
        seed,
        reps=args.reps,
        inputs={"report": args.report},
        tolerances={"se_band": 4.0},
    )
    rows = _report_rows(report) + [
        ("mc_var_ols", f"{mc['var_ols']['estimate']:.8g} +- {mc['var_ols']['std_error']:.2g}"),
        ("mc_var_alpha_star", f"{mc['var_alpha_star']['estimate']:.8g} +- {mc['var_alpha_star']['std_error']:.2g}"),
        ("within_4se", f"ols={mc['within_4se']['var_ols']} alpha_star={mc['within_4se']['var_alpha_star']}"),
    ]
    _emit(_doc(config, {"report": report}), args, _table("Monte Carlo confirmation", rows))
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, default=None, help="64-bit seed (env GMLAB_SEED as fallback)")
    common.add_argument("--out", metavar="PATH", help="write output here instead of stdout")
    common.add_argument("--format", choices=("json", "table"), default="json")

    parser = _Parser(prog="gmlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gmlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", parents=[common], help="dimension of the unbiased quadratic perturbation space")
    p.add_argument("--design", metavar="PATH")
    p.add_argument("--builtin", choices=("ex1", "ex2"))
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--with-basis", action="store_true", help="include basis matrices in JSON output")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("counterexample", parents=[common], help="find a quadratic estimator beating OLS")
    p.add_argument("--design", metavar="PATH")
    p.add_argument("--builtin", choices=("ex1", "ex2"))
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--gamma", type=float, default=1.5)
    p.add_argument("--p", type=float, default=DEFAULT_SKEW_P, help="skew weight of the two-point base law")
    p.add_argument("--strategy", choices=STRATEGIES, default="rule-i")
    p.add_argument("--budget", type=int, default=100)
    p.add_argument("--symmetric", action="store_true", help="force symmetric error laws")
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("refute", parents=[common], help="probe an estimator for bias under correlated errors")
    p.add_argument("--design", metavar="PATH")
    p.add_argument("--estimator", metavar="SPEC", help="builtin:ols | builtin:gls | builtin:hansen-tilde:i,j | file:PATH")
    p.add_argument("--builtin", choices=("ex1", "ex2", "ols", "gls", "hansen-tilde"))
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--sigma", metavar="PATH", help="Sigma matrix for builtin:gls")
    p.add_argument("--i", type=int, default=0)
    p.add_argument("--j", type=int, default=1)
    p.add_argument("--a", help="comma-separated direction vector for hansen-tilde")
    p.add_argument("--budget", type=int, default=50)
    p.add_argument("--fstar", action="store_true", help="also run the independent/correlated check (hansen-tilde)")
    p.set_defaults(func=cmd_refute)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo check of a counterexample report")
    p.add_argument("--report", metavar="PATH", required=True)
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        for name in ("budget", "reps"):
            val = getattr(args, name, None)
            if val is not None and val < (2 if name == "reps" else 1):
                raise UsageError(f"--{name} must be >= {2 if name == 'reps' else 1}")
        return args.func(args)
    except IoError as exc:
        print(f"gmlab: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, GMLabError, ValueError) as exc:
        print(f"gmlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
