import csv
import json
import subprocess
import sys

import pytest

from inneriter.cli import main


def _kv(text):
    out = {}
    for line in text.splitlines():
        k, sep, v = line.partition("=")
        if sep:
            out[k] = v
    return out


@pytest.fixture(scope="module")
def stokes16(tmp_path_factory):
    d = tmp_path_factory.mktemp("s16")
    assert main(["generate", "--family", "stokes", "--q", "16", "--mu", "1", "--out", str(d)]) == 0
    return d


@pytest.fixture(scope="module")
def struct4(tmp_path_factory):
    d = tmp_path_factory.mktemp("t4")
    assert main(["generate", "--family", "structured", "--q", "4", "--j", "2", "--density", "0", "--out", str(d)]) == 0
    return d


def test_generate_reports_size(tmp_path, capsys):
    assert main(["generate", "--family", "stokes", "--q", "16", "--out", str(tmp_path)]) == 0
    meta = _kv(capsys.readouterr().out)
    assert meta["n"] == "770"
    assert (tmp_path / "A.mtx").exists() and (tmp_path / "meta.txt").exists()


def test_generate_odd_grid_exits_2(tmp_path, capsys):
    assert main(["generate", "--family", "stokes", "--q", "15", "--out", str(tmp_path)]) == 2
    assert "even" in capsys.readouterr().err


def test_verify(stokes16, capsys):
    assert main(["verify", "--problem", str(stokes16)]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_solve_plain_gmres(stokes16, capsys):
    assert main(["solve", "--problem", str(stokes16), "--no-time"]) == 0
    rec = _kv(capsys.readouterr().out)
    assert rec["outer_iterations"] == "145"
    assert rec["outcome"] == "converged"
    assert "setup_time" not in rec


def test_solve_gss(stokes16, capsys, tmp_path):
    out = tmp_path / "rec.csv"
    trace = tmp_path / "trace.csv"
    code = main(["solve", "--problem", str(stokes16), "--method", "gmres-inner", "--splitting", "gss",
                 "--alpha", "10", "--ell", "3", "--out", str(out), "--trace", str(trace)])
    assert code == 0
    rec = _kv(capsys.readouterr().out)
    assert abs(int(rec["outer_iterations"]) - 13) <= 3
    row = next(csv.DictReader(open(out)))
    assert row["outer_iterations"] == rec["outer_iterations"] and "solve_time" in row
    assert len(trace.read_text().splitlines()) == int(rec["outer_iterations"]) + 2


def test_solve_inner_cap_exits_4(stokes16, capsys):
    code = main(["solve", "--problem", str(stokes16), "--method", "fgmres", "--splitting", "gss",
                 "--alpha", "30", "--inner-cap", "1", "--tol", "1e-10"])
    assert code == 4
    assert _kv(capsys.readouterr().out)["outcome"] == "inner-failure"


def test_solve_config_precedence(stokes16, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"method": {"solver": "gmres-inner", "splitting": "gss", "ell": 1, "alpha": 30.0},
                               "tol": 1e-3}))
    assert main(["solve", "--problem", str(stokes16), "--config", str(cfg), "--ell", "3", "--no-time"]) == 0
    out = _kv(capsys.readouterr().out)
    resolved = json.loads(out["config"])
    assert resolved["method"]["ell"] == 3 and resolved["method"]["alpha"] == 30.0 and resolved["tol"] == 1e-3


def test_solve_usage_errors(stokes16, capsys):
    assert main(["solve", "--problem", str(stokes16), "--splitting", "gss", "--method", "gmres-inner"]) == 2
    assert main(["solve", "--method", "fgmres"]) == 2
    assert main(["solve", "--problem", str(stokes16) + "-missing"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--problem", str(stokes16), "--shift", "3"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["solve", "--problem", str(stokes16), "--ell", "0"])


def test_analyze(struct4, capsys):
    assert main(["analyze", "--problem", str(struct4), "--splitting", "hss", "--alpha", "0.1", "--disk", "--ell", "2"]) == 0
    text = capsys.readouterr().out
    pairs = (line.split(None, 1) for line in text.splitlines() if not line.startswith("splitting="))
    lines = {p[0]: p[1] for p in pairs if len(p) == 2}
    assert lines["semiconvergent"].strip() == "True"
    assert lines["passed"].strip() == "True"


def test_analyze_budget_skip(stokes16, capsys):
    assert main(["analyze", "--problem", str(stokes16), "--splitting", "gss", "--budget", "100"]) == 0
    assert capsys.readouterr().out.startswith("skipped")


def test_estimate_alpha(struct4, tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    assert main(["estimate-alpha", "--problem", str(struct4), "--grid=-2:0:9", "--out", str(out)]) == 0
    assert "alpha_exp" in capsys.readouterr().out
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 9


def test_table_reproducible_without_time(tmp_path, capsys):
    args = ["table", "--id", "struct-j3", "--subset", "q=4", "--methods", "GMRES,HSS", "--no-time"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    capsys.readouterr()
    a = (tmp_path / "a" / "struct-j3.csv").read_bytes()
    assert a == (tmp_path / "b" / "struct-j3.csv").read_bytes()
    assert (tmp_path / "a" / "struct-j3.txt").read_bytes() == (tmp_path / "b" / "struct-j3.txt").read_bytes()


def test_table_bad_subset():
    with pytest.raises(SystemExit):
        main(["table", "--id", "struct-j3", "--subset", "size=4"])


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "inneriter", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip().endswith("0.1.0")
