"""Experiment configs, single runs and the table reproductions.

A run is described by an :class:`ExperimentConfig` (plain JSON-friendly
fields) and produces an :class:`ExperimentRecord`.  ``run_table`` executes
the method roster of one table id over a set of grid sizes and returns a
:class:`TableResult` that renders to CSV or an aligned text table.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .analysis import estimate_alpha_grid, log_grid, select_inner_count, spectral_report
from .krylov import Termination, fgmres, gmres, gmres_inner
from .problems import SaddleProblem, load_problem, stokes_generate, structured_generate
from .splittings import (
    InnerIterationPreconditioner,
    classic_build,
    default_gss_beta,
    gss_build,
    hss_build,
    igss_build,
    ihss_build,
)

log = logging.getLogger(__name__)

__all__ = [
    "ProblemSpec",
    "MethodSpec",
    "ExperimentConfig",
    "ExperimentRecord",
    "TableResult",
    "TABLE_IDS",
    "STOKES_ALPHA",
    "build_problem",
    "resolve_alpha",
    "run_single",
    "run_table",
]

# Shift alpha of the Stokes GSS runs, per grid size (both viscosities).
STOKES_ALPHA = {16: 30.0, 24: 37.0, 32: 57.0}

# Inner cap of the flexible GSS runs, as a multiple of n.
FLEX_GSS_CAP_FACTOR = 100

OUTCOMES = {
    Termination.CONVERGED: "converged",
    Termination.HAPPY_BREAKDOWN: "converged",
    Termination.BREAKDOWN: "breakdown",
    Termination.MAX_ITERATIONS: "max-iterations",
}


@dataclass
class ProblemSpec:
    family: str = "stokes"  # stokes | structured | file
    q: int = 16
    mu: float = 1.0
    j: int = 3
    density: float = 0.001
    seed: int = 0
    path: str = ""

    def key(self) -> tuple:
        if self.family == "stokes":
            return ("stokes", self.q, self.mu)
        if self.family == "structured":
            return ("structured", self.q, self.j, self.density, self.seed)
        return ("file", self.path)


@dataclass
class MethodSpec:
    solver: str = "gmres"  # gmres | gmres-inner | fgmres
    splitting: str = "none"  # none | gss | igss | hss | ihss | jacobi | gauss-seidel | sor | ssor
    ell: int | str = 1  # count, or "auto" for the inner-count rule
    alpha: float | None = None
    alpha_source: str = "explicit"  # explicit | default | grid
    grid: tuple = (-3.0, 0.0, 31)  # log10 lo, log10 hi, points
    beta: float | None = None
    omega: float = 1.0
    inner_tol: float = 0.1
    inner_maxit: int | None = None
    inner_cap: int | None = None
    ell_cap: int = 10


@dataclass
class ExperimentConfig:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    method: MethodSpec = field(default_factory=MethodSpec)
    tol: float = 1e-6
    maxit: int | None = None
    seed: int = 0
    label: str = ""
    trace_path: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"]["grid"] = list(d["method"]["grid"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        prob = ProblemSpec(**d.pop("problem", {}))
        meth = dict(d.pop("method", {}))
        if "grid" in meth:
            meth["grid"] = tuple(meth["grid"])
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(problem=prob, method=MethodSpec(**meth), **d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class ExperimentRecord:
    config: dict
    label: str
    n: int
    outer_iterations: int
    termination: str
    outcome: str  # converged | breakdown | inner-failure | max-iterations | error
    final_relative_residual: float
    verified_residual: float
    setup_time: float
    solve_time: float
    alpha: float | None = None
    beta: float | None = None
    ell: int | None = None
    nu: float | None = None
    inner_total: int = 0
    inner_max: int = 0
    failed_step: int | None = None
    message: str = ""

    @property
    def wall_time_seconds(self) -> float:
        return self.setup_time + self.solve_time


# Problems and parameters -------------------------------------------------------


def build_problem(spec: ProblemSpec) -> SaddleProblem:
    if spec.family == "stokes":
        return stokes_generate(spec.q, spec.mu)
    if spec.family == "structured":
        return structured_generate(spec.q, spec.j, density_target=spec.density, seed=spec.seed)
    if spec.family == "file":
        return load_problem(spec.path)
    raise ValueError(f"unknown problem family {spec.family!r}")


def _builder(problem: SaddleProblem, kind: str, beta=None):
    if kind in ("gss", "igss"):
        C, B = problem.blocks["C"], problem.blocks["B"]
        bb = default_gss_beta(C, B) if beta is None else beta
        return lambda a: gss_build(C, B, a, bb)
    return lambda a: hss_build(problem.A, a)


def resolve_alpha(problem: SaddleProblem, method: MethodSpec, cache: dict | None = None):
    """Return ``(alpha, nu or None)`` for a splitting that needs a shift."""
    if method.alpha_source == "explicit":
        if method.alpha is None:
            raise ValueError(f"splitting {method.splitting} needs alpha")
        return float(method.alpha), None
    if method.alpha_source == "default":
        if problem.family == "stokes" and problem.meta.get("q") in STOKES_ALPHA:
            return STOKES_ALPHA[problem.meta["q"]], None
        raise ValueError("no default alpha for this problem; give alpha or use grid search")
    if method.alpha_source == "grid":
        base = "gss" if method.splitting in ("gss", "igss") else "hss"
        key = ("sweep", base, tuple(method.grid), id(problem))
        if cache is not None and key in cache:
            return cache[key]
        lo, hi, pts = method.grid
        sweep = estimate_alpha_grid(_builder(problem, base, method.beta), log_grid(lo, hi, pts))
        out = (sweep.alpha_best, sweep.nu_best)
        if cache is not None:
            cache[key] = out
        return out
    raise ValueError(f"unknown alpha source {method.alpha_source!r}")


def build_splitting(problem: SaddleProblem, method: MethodSpec, alpha):
    kind = method.splitting
    if kind in ("jacobi", "gauss-seidel", "sor", "ssor"):
        return classic_build(problem.A, kind, method.omega)
    if kind == "gss":
        return gss_build(problem.blocks["C"], problem.blocks["B"], alpha, method.beta)
    if kind == "igss":
        return igss_build(problem.blocks["C"], problem.blocks["B"], alpha, method.beta,
                          inner_tol=method.inner_tol, inner_maxit=method.inner_maxit)
    if kind == "hss":
        return hss_build(problem.A, alpha)
    if kind == "ihss":
        return ihss_build(problem.A, alpha, inner_tol=method.inner_tol, inner_maxit=method.inner_maxit)
    raise ValueError(f"unknown splitting {kind!r}")


def verify_residual(problem: SaddleProblem, x) -> float:
    """Relative residual ``||b - A x|| / ||b||`` through a CSC product."""
    b = problem.b
    r = b - problem.A.tocsc() @ x
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(r) / nb) if nb else float(np.linalg.norm(r))


# Single run ----------------------------------------------------------------------------


def run_single(cfg: ExperimentConfig, problem: SaddleProblem | None = None,
               cache: dict | None = None) -> ExperimentRecord:
    """One solve.  ``setup_time`` covers parameter selection and splitting
    construction (factorizations included); ``solve_time`` covers the outer
    iteration including all inner iterations."""
    if problem is None:
        problem = build_problem(cfg.problem)
    m = cfg.method
    n = problem.n
    alpha = nu = ell = beta = None
    t0 = time.perf_counter()
    s = None
    if m.solver != "gmres" or m.splitting != "none":
        if m.splitting == "none":
            raise ValueError(f"solver {m.solver} needs a splitting")
        if m.splitting not in ("jacobi", "gauss-seidel", "sor", "ssor"):
            alpha, nu = resolve_alpha(problem, m, cache)
        skey = ("split", id(problem), m.splitting, alpha, m.beta, m.omega, m.inner_tol, m.inner_maxit)
        if cache is not None and skey in cache:
            s = cache[skey]
        else:
            s = build_splitting(problem, m, alpha)
            if cache is not None:
                cache[skey] = s
        beta = getattr(s, "beta", None)
        if m.ell == "auto":
            ekey = ("ell", id(problem), m.splitting, alpha, m.ell_cap)
            if cache is not None and ekey in cache:
                ell = cache[ekey]
            else:
                exact = s if s.exact else build_splitting(problem, replace(m, splitting=m.splitting.lstrip("i")), alpha)
                ell = select_inner_count(exact, problem.b, cap=m.ell_cap)
                if cache is not None:
                    cache[ekey] = ell
        else:
            ell = int(m.ell)
    setup = time.perf_counter() - t0

    kwargs = dict(tol=cfg.tol, maxit=cfg.maxit)
    t1 = time.perf_counter()
    if m.solver == "gmres" and s is None:
        rep = gmres(problem.A, problem.b, **kwargs)
    elif m.solver in ("gmres", "gmres-inner"):
        rep = gmres_inner(problem.A, problem.b, s, ell, **kwargs)
    elif m.solver == "fgmres":
        cap = m.inner_cap
        if cap is None and m.splitting in ("gss", "igss"):
            cap = FLEX_GSS_CAP_FACTOR * n
        rep = fgmres(problem.A, problem.b, InnerIterationPreconditioner(s, ell or 1), inner_cap=cap, **kwargs)
        ell = None
    else:
        raise ValueError(f"unknown solver {m.solver!r}")
    solve = time.perf_counter() - t1

    if cfg.trace_path:
        from .krylov import write_trace_csv

        write_trace_csv(rep, cfg.trace_path)
    outcome = "inner-failure" if rep.inner_failure else OUTCOMES[rep.termination]
    verified = verify_residual(problem, rep.x)
    rel = rep.relative_residual
    if outcome == "converged" and verified > cfg.tol + _roundoff(problem, rep.x):
        log.warning("%s: converged run failed residual re-verification (%.3e)", cfg.label, verified)
        outcome = "unverified"
    counts = rep.inner_iteration_counts
    return ExperimentRecord(
        config=cfg.to_dict(),
        label=cfg.label or m.solver,
        n=n,
        outer_iterations=rep.outer_iterations,
        termination=rep.termination.value,
        outcome=outcome,
        final_relative_residual=rel,
        verified_residual=verified,
        setup_time=setup,
        solve_time=solve,
        alpha=alpha,
        beta=beta,
        ell=ell,
        nu=nu,
        inner_total=int(sum(counts)),
        inner_max=int(max(counts, default=0)),
        failed_step=rep.failed_step,
        message=rep.message,
    )


def _roundoff(problem, x) -> float:
    # products summed in a different order may differ by about eps |A||x|
    nb = np.linalg.norm(problem.b)
    return 1e-14 * float(np.linalg.norm(abs(problem.A) @ np.abs(x))) / nb if nb else 0.0


# Tables --------------------------------------------------------------------------------


TABLE_IDS = (
    "stokes-mu1",
    "stokes-mu1e-5",
    "struct-j3",
    "struct-j6",
    "struct-j9",
    "params-j3",
    "params-j6",
    "params-j9",
)

DEFAULT_SIZES = {"stokes": (16, 24, 32), "struct": (16, 32), "params": (16, 32)}


def _stokes_roster():
    return [
        ("GMRES", MethodSpec()),
        ("GSS (l=1)", MethodSpec("gmres-inner", "gss", 1, alpha_source="default")),
        ("GSS (l=3)", MethodSpec("gmres-inner", "gss", 3, alpha_source="default")),
        ("IGSS (l=1)", MethodSpec("gmres-inner", "igss", 1, alpha_source="default")),
        ("IGSS (l=3)", MethodSpec("gmres-inner", "igss", 3, alpha_source="default")),
        ("F-GSS", MethodSpec("fgmres", "gss", 1, alpha_source="default")),
        ("F-IGSS", MethodSpec("fgmres", "igss", 1, alpha_source="default")),
    ]


def hss_grid(j: int) -> tuple:
    """Log grid of 31 points spanning 1.5 decades either side of ``10**(-j/2)``."""
    c = -j / 2.0
    return (c - 1.5, c + 1.5, 31)


def _struct_roster(j: int):
    g = hss_grid(j)
    kw = dict(alpha_source="grid", grid=g)
    return [
        ("GMRES", MethodSpec()),
        ("HSS", MethodSpec("gmres-inner", "hss", 1, **kw)),
        ("HSS'", MethodSpec("gmres-inner", "hss", "auto", **kw)),
        ("IHSS", MethodSpec("gmres-inner", "ihss", 1, **kw)),
        ("IHSS'", MethodSpec("gmres-inner", "ihss", "auto", **kw)),
        ("F-HSS'", MethodSpec("fgmres", "hss", 1, **kw)),
        ("F-IHSS'", MethodSpec("fgmres", "ihss", 1, **kw)),
    ]


def table_configs(table_id: str, sizes=None, methods=None, seed: int = 0, tol: float = 1e-6) -> list:
    """Expand a table id into ``(size, label, config)`` triples in table order."""
    if table_id not in TABLE_IDS:
        raise ValueError(f"unknown table id {table_id!r}; choose from {', '.join(TABLE_IDS)}")
    if table_id.startswith("stokes"):
        mu = 1.0 if table_id == "stokes-mu1" else 1e-5
        sizes = sizes or DEFAULT_SIZES["stokes"]
        roster = _stokes_roster()
        mk = lambda q: ProblemSpec("stokes", q=q, mu=mu)
    elif table_id.startswith("struct"):
        j = int(table_id.split("-j")[1])
        sizes = sizes or DEFAULT_SIZES["struct"]
        roster = _struct_roster(j)
        mk = lambda q: ProblemSpec("structured", q=q, j=j, seed=seed)
    else:
        return []
    out = []
    for q in sizes:
        for label, meth in roster:
            if methods and label not in methods:
                continue
            out.append((q, label, ExperimentConfig(problem=mk(q), method=meth, tol=tol, seed=seed, label=label)))
    return out


@dataclass
class ParamRecord:
    q: int
    j: int
    alpha_exp: float
    nu: float
    grid: list
    table: list


@dataclass
class TableResult:
    table_id: str
    sizes: tuple
    records: list  # ExperimentRecord or ParamRecord, in table order
    failures: list = field(default_factory=list)

    # CSV ---------------------------------------------------------------------
    def to_csv(self, include_time: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.table_id.startswith("params"):
            w.writerow(["table", "q", "j", "alpha_exp", "nu"])
            for r in self.records:
                w.writerow([self.table_id, r.q, r.j, repr(r.alpha_exp), repr(r.nu)])
            return buf.getvalue()
        cols = ["table", "size", "label", "n", "solver", "splitting", "alpha", "beta", "ell", "nu",
                "outer_iterations", "outcome", "termination", "final_relative_residual",
                "verified_residual", "inner_total", "inner_max", "failed_step"]
        if include_time:
            cols += ["setup_time", "solve_time"]
        w.writerow(cols)
        for r in self.records:
            p, m = r.config["problem"], r.config["method"]
            row = [self.table_id, p["q"], r.label, r.n, m["solver"], m["splitting"], _num(r.alpha),
                   _num(r.beta), "" if r.ell is None else r.ell, _num(r.nu), r.outer_iterations,
                   r.outcome, r.termination, repr(r.final_relative_residual), repr(r.verified_residual),
                   r.inner_total, r.inner_max, "" if r.failed_step is None else r.failed_step]
            if include_time:
                row += [f"{r.setup_time:.4f}", f"{r.solve_time:.4f}"]
            w.writerow(row)
        return buf.getvalue()

    # Text --------------------------------------------------------------------
    def to_text(self, include_time: bool = True) -> str:
        if self.table_id.startswith("params"):
            head = ["q"] + [str(r.q) for r in self.records]
            rows = [["alpha_exp"] + [f"{r.alpha_exp:.5g}" for r in self.records],
                    ["nu(H(alpha_exp))"] + [f"{r.nu:.5f}" for r in self.records]]
            return _align([head] + rows)
        labels = []
        for r in self.records:
            if r.label not in labels:
                labels.append(r.label)
        by = {(r.config["problem"]["q"], r.label): r for r in self.records}
        per = ["l", "Iter"] + (["Time"] if include_time else [])
        head = [""] + [f"{h}@{q}" for q in self.sizes for h in per]
        rows = []
        alpha_row = ["alpha"]
        for q in self.sizes:
            a = next((r.alpha for r in self.records if r.config["problem"]["q"] == q and r.alpha is not None), None)
            alpha_row += ["", "" if a is None else f"{a:.5g}"] + ([""] if include_time else [])
        rows.append(alpha_row)
        for lab in labels:
            row = [lab]
            for q in self.sizes:
                r = by.get((q, lab))
                if r is None:
                    row += ["", "-"] + (["-"] if include_time else [])
                    continue
                mark = {"converged": "", "inner-failure": " (dag)", "breakdown": " (bd)",
                        "max-iterations": " (max)", "unverified": " (unv)", "error": " (err)"}.get(r.outcome, "")
                row += ["" if r.ell is None or r.config["method"]["solver"] == "gmres" else str(r.ell),
                        f"{r.outer_iterations}{mark}"]
                if include_time:
                    row.append(f"{r.wall_time_seconds:.3f}")
            rows.append(row)
        return _align([head] + rows)


def _num(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def _align(rows) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    out = []
    for r in rows:
        out.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
    return "\n".join(s.rstrip() for s in out) + "\n"


def _error_record(cfg: ExperimentConfig, exc: Exception) -> ExperimentRecord:
    return ExperimentRecord(
        config=cfg.to_dict(), label=cfg.label, n=0, outer_iterations=0, termination="error",
        outcome="error", final_relative_residual=math.nan, verified_residual=math.nan,
        setup_time=0.0, solve_time=0.0, message=f"{type(exc).__name__}: {exc}",
    )


def _run_group(items):
    """Run configs sharing a problem with one cache; errors become records."""
    problem = None
    cache: dict = {}
    out = []
    for cfg in items:
        try:
            if problem is None:
                problem = build_problem(cfg.problem)
            out.append(run_single(cfg, problem, cache))
        except Exception as exc:  # recorded, table continues
            log.error("%s failed: %s", cfg.label, exc)
            out.append(_error_record(cfg, exc))
    return out


def run_table(table_id: str, sizes=None, methods=None, seed: int = 0, tol: float = 1e-6,
              workers: int = 1) -> TableResult:
    """Run one table.  ``sizes`` restricts the grid sizes and ``methods`` the row labels.

    With ``workers > 1`` different sizes run in separate processes; records
    are assembled in table order either way.
    """
    if table_id.startswith("params"):
        j = int(table_id.split("-j")[1])
        sizes = tuple(sizes or DEFAULT_SIZES["params"])
        recs = []
        for q in sizes:
            P = structured_generate(q, j, seed=seed)
            lo, hi, pts = hss_grid(j)
            grid = log_grid(lo, hi, pts)
            sw = estimate_alpha_grid(lambda a: hss_build(P.A, a), grid)
            recs.append(ParamRecord(q, j, sw.alpha_best, sw.nu_best, list(map(float, grid)), sw.table))
        return TableResult(table_id, sizes, recs)
    triples = table_configs(table_id, sizes, methods, seed, tol)
    sizes = tuple(dict.fromkeys(q for q, _, _ in triples))
    groups = [[cfg for q2, _, cfg in triples if q2 == q] for q in sizes]
    if workers > 1 and len(groups) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_group, groups))
    else:
        results = [_run_group(g) for g in groups]
    records = [r for grp in results for r in grp]
    failures = [r for r in records if r.outcome != "converged"]
    return TableResult(table_id, sizes, records, failures)


def nu_of(splitting) -> float:
    return spectral_report(splitting.H_dense()).nu
