import json
import subprocess
import sys

import numpy as np
import pytest

from gmlab.cli import main
from gmlab.lab import EX2_X, example_ex1


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def ex2_csv(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n" + "\n".join(",".join(str(v) for v in row) for row in EX2_X) + "\n")
    return str(path)


def test_analyze_ex2(capsys):
    code, out, _ = run(["analyze", "--builtin", "ex2"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["schema_version"] == 1 and doc["command"] == "analyze"
    r = doc["result"]
    assert r["dim"] == 6 and r["constraint_rank"] == 4 and r["example_h_in_span"]


def test_analyze_design_file(ex2_csv, capsys):
    code, out, _ = run(["analyze", "--design", ex2_csv, "--with-basis"], capsys)
    r = json.loads(out)["result"]
    assert code == 0 and len(r["basis"]) == r["dim"] == 6


@pytest.mark.parametrize("n", [2, 4])
def test_analyze_location(n, capsys):
    code, out, _ = run(["analyze", "--builtin", "ex1", "--n", str(n)], capsys)
    assert json.loads(out)["result"]["location_iid_null"] is True


def test_counterexample_ex1(capsys):
    code, out, _ = run(["counterexample", "--builtin", "ex1", "--n", "3"], capsys)
    rep = json.loads(out)["result"]["report"]
    assert code == 0
    assert rep["cov_term"] == pytest.approx(0.5, abs=1e-12)


def test_counterexample_symmetric_not_found(capsys):
    code, out, _ = run(["counterexample", "--builtin", "ex2", "--symmetric"], capsys)
    assert code == 3 and json.loads(out)["result"]["found"] is False


def test_counterexample_search_from_file(ex2_csv, capsys):
    code, out, _ = run(["counterexample", "--design", ex2_csv, "--budget", "10", "--seed", "0x10"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["config"]["seed"] == 16 and doc["config"]["budget"] == 10


def test_refute_quadratic_and_ols(ex2_csv, capsys):
    code, out, _ = run(["refute", "--builtin", "ex1"], capsys)
    assert code == 4 and json.loads(out)["result"]["verdict"] == "refutation"
    code, out, _ = run(["refute", "--design", ex2_csv, "--estimator", "builtin:ols"], capsys)
    doc = json.loads(out)["result"]
    assert code == 0 and doc["verdict"] == "pass"
    assert any("not a proof" in n for n in doc["notes"])


def test_refute_gls_with_sigma(ex2_csv, tmp_path, capsys):
    s = tmp_path / "s.json"
    s.write_text(json.dumps(np.diag([1.0, 2.0, 3.0, 4.0]).tolist()))
    code, _, _ = run(["refute", "--design", ex2_csv, "--estimator", "builtin:gls", "--sigma", str(s)], capsys)
    assert code == 0


def test_refute_hansen(tmp_path, capsys):
    sat = tmp_path / "sat.csv"
    sat.write_text("1,0\n0,1\n1,1\n")
    code, out, _ = run(["refute", "--design", str(sat), "--estimator", "builtin:hansen-tilde:0,1"], capsys)
    assert code == 0 and "coincides with OLS" in json.loads(out)["result"]["notes"]
    gen = tmp_path / "gen.csv"
    gen.write_text("1,0.3\n1,-1.2\n1,2.0\n1,0.7\n1,-0.4\n")
    code, out, _ = run(
        ["refute", "--design", str(gen), "--estimator", "builtin:hansen-tilde:0,1", "--fstar"], capsys
    )
    fstar = json.loads(out)["result"]["fstar"]
    assert fstar["independent_pass"] and fstar["correlated_refutation"] is not None


def test_refute_file_estimator(tmp_path, capsys):
    ex = example_ex1(3)
    est = tmp_path / "est.json"
    est.write_text(json.dumps(ex.estimator.to_dict()))
    design = tmp_path / "d.csv"
    design.write_text("1\n1\n1\n")
    code, _, _ = run(["refute", "--design", str(design), "--estimator", f"file:{est}"], capsys)
    assert code == 4


def test_simulate_roundtrip(tmp_path, capsys):
    rep = tmp_path / "rep.json"
    code, _, _ = run(["counterexample", "--builtin", "ex2", "--out", str(rep)], capsys)
    assert code == 0
    code, out, _ = run(["simulate", "--report", str(rep), "--reps", "20000", "--seed", "3"], capsys)
    mc = json.loads(out)["result"]["report"]["mc_confirmation"]
    assert code == 0 and mc["within_4se"]["var_alpha_star"]


def test_table_format(capsys):
    code, out, _ = run(["counterexample", "--builtin", "ex1", "--format", "table"], capsys)
    assert code == 0 and "alpha_star" in out and not out.lstrip().startswith("{")


def test_seed_env_fallback(monkeypatch, ex2_csv, capsys):
    monkeypatch.setenv("GMLAB_SEED", "12345")
    _, out, _ = run(["counterexample", "--design", ex2_csv, "--budget", "3"], capsys)
    assert json.loads(out)["config"]["seed"] == 12345
    _, out, _ = run(["counterexample", "--design", ex2_csv, "--budget", "3", "--seed", "7"], capsys)
    assert json.loads(out)["config"]["seed"] == 7
    monkeypatch.delenv("GMLAB_SEED")
    _, out, _ = run(["counterexample", "--design", ex2_csv, "--budget", "3"], capsys)
    assert json.loads(out)["config"]["seed"] == 0x6D61726B


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,x\n")
    code, _, err = run(["analyze", "--design", str(bad)], capsys)
    assert code == 2 and ":2:" in err
    code, _, _ = run(["analyze", "--design", str(tmp_path / "missing.csv")], capsys)
    assert code == 2
    rank = tmp_path / "rank.csv"
    rank.write_text("1,2\n2,4\n3,6\n")
    assert run(["analyze", "--design", str(rank)], capsys)[0] == 1
    assert run(["simulate", "--report", str(bad), "--reps", "1"], capsys)[0] == 1
    assert run(["refute", "--builtin", "ex1", "--budget", "0"], capsys)[0] == 1
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1


def test_json_output_is_byte_identical(ex2_csv, tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"o{k}.json"
        subprocess.run(
            [sys.executable, "-m", "gmlab", "counterexample", "--design", ex2_csv,
             "--strategy", "tensor", "--budget", "5", "--seed", "42", "--out", str(path)],
            check=True,
        )
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
