"""Command-line interface: ``inneriter <command> [options]``.

Commands: generate, solve, analyze, estimate-alpha, table, verify.

Exit codes: 0 success, 2 invalid input, 3 breakdown without a solution,
4 inner-iteration failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .analysis import (
    BudgetExceeded,
    disk_check,
    estimate_alpha_grid,
    log_grid,
    report_to_text,
    spectral_report,
    sweep_to_text,
)
from .harness import (
    TABLE_IDS,
    ExperimentConfig,
    MethodSpec,
    ProblemSpec,
    build_splitting,
    resolve_alpha,
    run_single,
    run_table,
)
from .problems import export_problem, load_problem, stokes_generate, structured_generate, verify_problem

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_BREAKDOWN = 3
EXIT_INNER = 4

SPLITTINGS = ("none", "gss", "igss", "hss", "ihss", "jacobi", "gauss-seidel", "sor", "ssor")


class UsageError(Exception):
    pass


def _parse_grid(text: str) -> tuple:
    try:
        lo, hi, pts = text.split(":")
        return float(lo), float(hi), int(pts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be lo:hi:points (log10 exponents), got {text!r}") from None


def _parse_ell(text: str):
    if text == "auto":
        return "auto"
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"ell must be a positive integer or 'auto', got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("ell must be >= 1")
    return v


def _parse_subset(text: str) -> list:
    key, _, vals = text.partition("=")
    if key.strip() not in ("q", "grid") or not vals:
        raise argparse.ArgumentTypeError(f"subset must look like q=16,32, got {text!r}")
    try:
        return [int(v) for v in vals.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list in {text!r}") from None


# generate ---------------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.family == "stokes":
        P = stokes_generate(args.q, args.mu)
    else:
        P = structured_generate(args.q, args.j, density_target=args.density, seed=args.seed)
    out = export_problem(P, args.out)
    print(f"wrote {out}")
    for k, v in P.meta.items():
        print(f"{k}={v}")
    return EXIT_OK


# solve --------------------------------------------------------------------------


def _method_from_args(args, base: MethodSpec) -> MethodSpec:
    m = MethodSpec(**vars(base))
    for flag, attr in (("method", "solver"), ("splitting", "splitting"), ("ell", "ell"), ("alpha", "alpha"),
                       ("beta", "beta"), ("omega", "omega"), ("inner_tol", "inner_tol"),
                       ("inner_maxit", "inner_maxit"), ("inner_cap", "inner_cap"), ("grid", "grid")):
        v = getattr(args, flag, None)
        if v is not None:
            setattr(m, attr, v)
    if getattr(args, "alpha_source", None):
        m.alpha_source = args.alpha_source
    elif args.alpha is not None:
        m.alpha_source = "explicit"
    return m


def resolve_solve_config(args) -> ExperimentConfig:
    """Defaults, then the config file, then flags."""
    cfg = ExperimentConfig()
    if args.config:
        cfg = ExperimentConfig.from_json(Path(args.config).read_text())
    if args.problem:
        cfg.problem = ProblemSpec(family="file", path=str(args.problem))
    if cfg.problem.family == "file" and not cfg.problem.path:
        raise UsageError("solve needs --problem DIR (or a config with a problem)")
    cfg.method = _method_from_args(args, cfg.method)
    if args.tol is not None:
        cfg.tol = args.tol
    if args.maxit is not None:
        cfg.maxit = args.maxit
    if args.trace:
        cfg.trace_path = str(args.trace)
    if args.label:
        cfg.label = args.label
    m = cfg.method
    if m.solver != "gmres" and m.splitting == "none":
        raise UsageError(f"--method {m.solver} needs --splitting")
    if m.splitting in ("gss", "igss", "hss", "ihss") and m.alpha_source == "explicit" and m.alpha is None:
        raise UsageError(f"--splitting {m.splitting} needs --alpha (or --alpha-source grid/default)")
    return cfg


RECORD_FIELDS = ("label", "n", "outer_iterations", "outcome", "termination", "final_relative_residual",
                 "verified_residual", "alpha", "beta", "ell", "nu", "inner_total", "inner_max", "failed_step")


def _record_row(rec, include_time: bool) -> dict:
    row = {k: getattr(rec, k) for k in RECORD_FIELDS}
    if include_time:
        row["setup_time"] = f"{rec.setup_time:.4f}"
        row["solve_time"] = f"{rec.solve_time:.4f}"
    return row


def cmd_solve(args) -> int:
    cfg = resolve_solve_config(args)
    rec = run_single(cfg)
    include_time = not args.no_time
    print(f"config={cfg.to_json()}")
    for k, v in _record_row(rec, include_time).items():
        print(f"{k}={v}")
    if rec.message:
        print(f"message={rec.message}")
    if args.out:
        row = _record_row(rec, include_time)
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(row), lineterminator="\n")
            w.writeheader()
            w.writerow({k: ("" if v is None else v) for k, v in row.items()})
    if rec.outcome == "inner-failure":
        return EXIT_INNER
    if rec.outcome == "breakdown":
        return EXIT_BREAKDOWN
    return EXIT_OK


# analyze / estimate-alpha ---------------------------------------------------------


def cmd_analyze(args) -> int:
    P = load_problem(args.problem)
    m = MethodSpec(solver="gmres-inner", splitting=args.splitting, alpha=args.alpha, beta=args.beta,
                   omega=args.omega, alpha_source="explicit" if args.alpha is not None else "default")
    alpha = None
    if m.splitting in ("gss", "hss"):
        alpha, _ = resolve_alpha(P, m)
    elif m.splitting not in ("jacobi", "gauss-seidel", "sor", "ssor"):
        raise UsageError("analyze needs an exact splitting: gss, hss, jacobi, gauss-seidel, sor or ssor")
    s = build_splitting(P, m, alpha)
    try:
        rep = spectral_report(s.H_dense(), budget=args.budget)
    except BudgetExceeded as exc:
        print(f"skipped: {exc}")
        return EXIT_OK
    print(f"splitting={json.dumps(s.descriptor(), sort_keys=True)}")
    print(report_to_text(rep), end="")
    if args.disk:
        d = disk_check(P.A, s, args.ell, budget=args.budget)
        print(report_to_text(d), end="")
    return EXIT_OK


def cmd_estimate_alpha(args) -> int:
    P = load_problem(args.problem)
    lo, hi, pts = args.grid
    grid = log_grid(lo, hi, pts)
    if args.splitting_kind == "gss":
        from .splittings import default_gss_beta, gss_build

        C, B = P.blocks["C"], P.blocks["B"]
        beta = default_gss_beta(C, B) if args.beta is None else args.beta
        sweep = estimate_alpha_grid(lambda a: gss_build(C, B, a, beta), grid)
    else:
        from .splittings import hss_build

        sweep = estimate_alpha_grid(lambda a: hss_build(P.A, a), grid)
    print(sweep_to_text(sweep), end="")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["alpha", "nu", "error"])
            for a, nu, err in sweep.table:
                w.writerow([repr(a), repr(nu), err])
    return EXIT_OK


# table / verify -------------------------------------------------------------------


def cmd_table(args) -> int:
    methods = args.methods.split(",") if args.methods else None
    res = run_table(args.id, sizes=args.subset, methods=methods, seed=args.seed, workers=args.workers)
    include_time = not args.no_time
    text = res.to_text(include_time)
    print(text, end="")
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{args.id}.csv").write_text(res.to_csv(include_time))
        (d / f"{args.id}.txt").write_text(text)
        print(f"wrote {d / (args.id + '.csv')}")
    return EXIT_OK


def cmd_verify(args) -> int:
    P = load_problem(args.problem)
    rep = verify_problem(P)
    ok = True
    for name, (passed, value) in rep.items():
        ok &= bool(passed)
        print(f"{name:24s} {'pass' if passed else 'FAIL'}  {value:.6g}")
    return EXIT_OK if ok else EXIT_INVALID


# parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="inneriter", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a test problem and write it as Matrix Market files")
    g.add_argument("--family", choices=("stokes", "structured"), required=True, help="problem family")
    g.add_argument("--q", type=int, required=True, help="grid size (stokes) or block size q (structured)")
    g.add_argument("--mu", type=float, default=1.0, help="viscosity for the stokes family (default 1)")
    g.add_argument("--j", type=int, default=3, help="condition exponent for the structured family (default 3)")
    g.add_argument("--density", type=float, default=0.001, help="target density of A, structured family")
    g.add_argument("--seed", type=int, default=0, help="random seed, structured family (default 0)")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run one solve on a generated problem")
    s.add_argument("--problem", help="problem directory written by generate")
    s.add_argument("--config", help="JSON experiment config; flags override its fields")
    s.add_argument("--method", choices=("gmres", "gmres-inner", "fgmres"), help="outer solver")
    s.add_argument("--splitting", choices=SPLITTINGS, help="splitting for the inner iterations")
    s.add_argument("--ell", type=_parse_ell, help="inner steps per outer step, or 'auto' for the selection rule")
    s.add_argument("--alpha", type=float, help="shift alpha for gss/igss/hss/ihss")
    s.add_argument("--alpha-source", choices=("explicit", "default", "grid"),
                   help="where alpha comes from (default: explicit when --alpha is given)")
    s.add_argument("--grid", type=_parse_grid, help="log10 alpha grid lo:hi:points for --alpha-source grid (use --grid=LO:HI:N)")
    s.add_argument("--beta", type=float, help="shift beta for gss/igss (default ||B||^2/||C||)")
    s.add_argument("--omega", type=float, help="relaxation factor for sor/ssor")
    s.add_argument("--tol", type=float, help="relative residual tolerance (default 1e-6)")
    s.add_argument("--maxit", type=int, help="maximum outer iterations (default n)")
    s.add_argument("--inner-tol", type=float, help="inner solve tolerance of igss/ihss (default 0.1)")
    s.add_argument("--inner-maxit", type=int, help="inner solve iteration cap of igss/ihss (default n)")
    s.add_argument("--inner-cap", type=int, help="cap on adaptive inner iterations for fgmres")
    s.add_argument("--trace", help="write the per-iteration residual trace to this CSV file")
    s.add_argument("--out", help="write the record to this CSV file")
    s.add_argument("--label", help="label stored in the record")
    s.add_argument("--no-time", action="store_true", help="omit timing fields")
    s.set_defaults(func=cmd_solve)

    a = sub.add_parser("analyze", help="spectral report of a splitting's iteration matrix")
    a.add_argument("--problem", required=True, help="problem directory")
    a.add_argument("--splitting", required=True, choices=("gss", "hss", "jacobi", "gauss-seidel", "sor", "ssor"),
                   help="exact splitting to analyse")
    a.add_argument("--alpha", type=float, help="shift alpha (stokes problems default to the table value)")
    a.add_argument("--beta", type=float, help="shift beta for gss (default ||B||^2/||C||)")
    a.add_argument("--omega", type=float, default=1.0, help="relaxation factor for sor/ssor")
    a.add_argument("--ell", type=int, default=1, help="inner steps for the disk check (default 1)")
    a.add_argument("--disk", action="store_true", help="also check the eigenvalue disk of A C_ell")
    a.add_argument("--budget", type=int, default=1500, help="largest n for dense eigensolves (default 1500)")
    a.set_defaults(func=cmd_analyze)

    e = sub.add_parser("estimate-alpha", help="grid search for the alpha minimising nu(H(alpha))")
    e.add_argument("--problem", required=True, help="problem directory")
    e.add_argument("--splitting-kind", choices=("hss", "gss"), default="hss", help="splitting (default hss)")
    e.add_argument("--grid", type=_parse_grid, default=(-3.0, 0.0, 31),
                   help="log10 grid lo:hi:points, written --grid=-3:0:31 when lo is negative (default -3:0:31)")
    e.add_argument("--beta", type=float, help="shift beta for gss (default ||B||^2/||C||)")
    e.add_argument("--out", help="write the sweep to this CSV file")
    e.set_defaults(func=cmd_estimate_alpha)

    t = sub.add_parser("table", help="reproduce one results table")
    t.add_argument("--id", required=True, choices=TABLE_IDS, help="table id")
    t.add_argument("--subset", type=_parse_subset, help="restrict sizes, e.g. q=16 or q=16,24")
    t.add_argument("--methods", help="comma-separated row labels to run (default all)")
    t.add_argument("--seed", type=int, default=0, help="seed of the structured problems (default 0)")
    t.add_argument("--workers", type=int, default=1, help="processes for independent sizes (default 1)")
    t.add_argument("--out", help="directory for the CSV and text outputs")
    t.add_argument("--no-time", action="store_true", help="omit time columns")
    t.set_defaults(func=cmd_table)

    v = sub.add_parser("verify", help="check a problem's structural invariants")
    v.add_argument("--problem", required=True, help="problem directory")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
