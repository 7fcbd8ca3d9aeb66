import json

import numpy as np
import pytest

from inneriter import harness as hz
from inneriter.harness import ExperimentConfig, MethodSpec, ProblemSpec


def test_config_json_round_trip():
    cfg = ExperimentConfig(
        problem=ProblemSpec("structured", q=8, j=6, density=0.1, seed=3),
        method=MethodSpec("fgmres", "ihss", "auto", alpha_source="grid", grid=(-4.5, -1.5, 11), inner_cap=50),
        tol=1e-8,
        label="x",
    )
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg
    assert json.loads(cfg.to_json())["method"]["grid"] == [-4.5, -1.5, 11]


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"tolerance": 1e-6})
    with pytest.raises(TypeError):
        ExperimentConfig.from_dict({"method": {"shift": 1.0}})


def test_build_problem_families(tmp_path):
    from inneriter.problems import export_problem

    P = hz.build_problem(ProblemSpec("stokes", q=4))
    assert P.n == 50
    export_problem(P, tmp_path / "p")
    Q = hz.build_problem(ProblemSpec("file", path=str(tmp_path / "p")))
    assert (P.A != Q.A).nnz == 0
    with pytest.raises(ValueError):
        hz.build_problem(ProblemSpec("poisson"))


def test_resolve_alpha_sources():
    P = hz.build_problem(ProblemSpec("stokes", q=16))
    assert hz.resolve_alpha(P, MethodSpec(splitting="gss", alpha=2.5))[0] == 2.5
    assert hz.resolve_alpha(P, MethodSpec(splitting="gss", alpha_source="default"))[0] == hz.STOKES_ALPHA[16]
    with pytest.raises(ValueError):
        hz.resolve_alpha(P, MethodSpec(splitting="gss"))
    S = hz.build_problem(ProblemSpec("structured", q=4, j=2, density=0.0))
    with pytest.raises(ValueError):
        hz.resolve_alpha(S, MethodSpec(splitting="hss", alpha_source="default"))
    cache = {}
    m = MethodSpec(splitting="hss", alpha_source="grid", grid=(-2.0, 0.0, 9))
    a, nu = hz.resolve_alpha(S, m, cache)
    assert a in hz.log_grid(-2.0, 0.0, 9) and 0 < nu < 1
    assert hz.resolve_alpha(S, m, cache) == (a, nu) and len(cache) == 1


def test_run_single_gmres_and_gss():
    cfg = ExperimentConfig(problem=ProblemSpec("stokes", q=4), label="g")
    rec = hz.run_single(cfg)
    assert rec.outcome == "converged" and rec.verified_residual <= 1e-6
    assert rec.label == "g" and rec.n == 50
    cfg = ExperimentConfig(problem=ProblemSpec("stokes", q=4), method=MethodSpec("gmres-inner", "gss", 2, alpha=3.0))
    rec2 = hz.run_single(cfg)
    assert rec2.outcome == "converged" and rec2.outer_iterations < rec.outer_iterations
    assert rec2.ell == 2 and rec2.inner_total == 2 * rec2.outer_iterations
    assert rec2.wall_time_seconds == rec2.setup_time + rec2.solve_time


def test_run_single_auto_ell_uses_exact_counterpart():
    P = hz.build_problem(ProblemSpec("structured", q=4, j=2, density=0.0))
    m = MethodSpec("gmres-inner", "ihss", "auto", alpha=0.1, ell_cap=4)
    rec = hz.run_single(ExperimentConfig(method=m), problem=P)
    m2 = MethodSpec("gmres-inner", "hss", "auto", alpha=0.1, ell_cap=4)
    rec2 = hz.run_single(ExperimentConfig(method=m2), problem=P)
    assert rec.ell == rec2.ell and 1 <= rec.ell <= 4


def test_run_single_inner_failure_and_errors():
    m = MethodSpec("fgmres", "jacobi", inner_cap=1)
    cfg = ExperimentConfig(problem=ProblemSpec("structured", q=4, j=3, density=0.0), method=m, tol=1e-12)
    with pytest.raises(ValueError):
        # zero diagonal in the structured family
        hz.run_single(cfg)
    m = MethodSpec("fgmres", "gss", alpha=3.0, inner_cap=1)
    rec = hz.run_single(ExperimentConfig(problem=ProblemSpec("stokes", q=4, mu=1e-3), method=m, tol=1e-12))
    assert rec.outcome == "inner-failure" and rec.failed_step >= 1
    with pytest.raises(ValueError):
        hz.run_single(ExperimentConfig(problem=ProblemSpec("stokes", q=4), method=MethodSpec("fgmres")))


def test_trace_written(tmp_path):
    path = tmp_path / "trace.csv"
    cfg = ExperimentConfig(problem=ProblemSpec("stokes", q=4), trace_path=str(path))
    rec = hz.run_single(cfg)
    assert len(path.read_text().splitlines()) == rec.outer_iterations + 2


def test_table_configs():
    tri = hz.table_configs("stokes-mu1", sizes=(16,))
    assert [lab for _, lab, _ in tri] == ["GMRES", "GSS (l=1)", "GSS (l=3)", "IGSS (l=1)", "IGSS (l=3)", "F-GSS", "F-IGSS"]
    tri = hz.table_configs("struct-j6", sizes=(16, 32), methods=["HSS"])
    assert len(tri) == 2 and tri[0][2].method.grid == hz.hss_grid(6)
    with pytest.raises(ValueError):
        hz.table_configs("stokes-mu2")


def test_run_table_small_is_deterministic():
    a = hz.run_table("struct-j3", sizes=(4,), methods=["GMRES", "HSS", "IHSS'"])
    b = hz.run_table("struct-j3", sizes=(4,), methods=["GMRES", "HSS", "IHSS'"], workers=2)
    assert a.to_csv(include_time=False) == b.to_csv(include_time=False)
    assert a.to_text(include_time=False) == b.to_text(include_time=False)
    assert [r.label for r in a.records] == ["GMRES", "HSS", "IHSS'"]
    assert "setup_time" in a.to_csv() and "setup_time" not in a.to_csv(include_time=False)


def test_run_table_parallel_sizes():
    a = hz.run_table("stokes-mu1", sizes=(2, 4), methods=["GMRES", "GSS (l=1)"])
    b = hz.run_table("stokes-mu1", sizes=(2, 4), methods=["GMRES", "GSS (l=1)"], workers=2)
    assert a.to_csv(False) == b.to_csv(False)
    # no default alpha at these sizes: the GSS rows are error records, GMRES still runs
    outcomes = {(r.config["problem"]["q"], r.label): r.outcome for r in a.records}
    assert outcomes[(2, "GMRES")] == "converged" and outcomes[(4, "GSS (l=1)")] == "error"
    assert len(a.failures) == 2


def test_params_table():
    res = hz.run_table("params-j3", sizes=(4,))
    (r,) = res.records
    assert r.alpha_exp in np.asarray(r.grid) and 0 < r.nu < 1
    assert res.to_csv().splitlines()[0] == "table,q,j,alpha_exp,nu"
    assert "nu(H(alpha_exp))" in res.to_text()
