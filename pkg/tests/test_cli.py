import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from possdro import cli
from possdro.errors import CertificationError
from possdro.solvers.conic import ENV_BACKEND

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def drex_file(tmp_path):
    p = tmp_path / "drex.yaml"
    p.write_text(cli.example_text("drex"))
    return str(p)


@pytest.fixture
def portfolio_file(tmp_path):
    p = tmp_path / "portfolio.yaml"
    p.write_text(cli.example_text("portfolio"))
    return str(p)


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    return list(csv.reader(io.StringIO(text)))


# exit codes --------------------------------------------------------------

def test_usage_errors(capsys):
    assert run(capsys)[0] == cli.EXIT_USAGE
    assert run(capsys, "frobnicate")[0] == cli.EXIT_USAGE
    assert run(capsys, "eval", "x.yaml")[0] == cli.EXIT_USAGE


def test_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "solve", str(tmp_path / "none.yaml"))
    assert code == cli.EXIT_IO and "cannot read" in err


def test_unwritable_output(capsys, drex_file, tmp_path):
    code, _, _ = run(capsys, "reformulate", drex_file, "-o", str(tmp_path / "no" / "dir" / "p.json"))
    assert code == cli.EXIT_IO


def test_document_error(capsys, tmp_path):
    doc = yaml.safe_load(cli.example_text("drex"))
    doc["objective"]["uncertain"]["z1"] = [0, 1]
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump(doc))
    code, _, err = run(capsys, "solve", str(p))
    assert code == cli.EXIT_DOCUMENT and "objective.uncertain.z1[1]" in err


def test_malformed_document(capsys, tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("variables: [\n")
    code, _, err = run(capsys, "eval", str(p), "--x", "1")
    assert code == cli.EXIT_DOCUMENT and "line" in err


def test_solver_failure_without_backend(capsys, drex_file, monkeypatch):
    monkeypatch.delenv(ENV_BACKEND, raising=False)
    code, _, err = run(capsys, "solve", drex_file, "--engine", "backend")
    assert code == cli.EXIT_SOLVER and "no conic backend" in err


def test_solver_status_reported(capsys, tmp_path):
    doc = yaml.safe_load(cli.example_text("drex"))
    doc["constraints"] = [{"name": "cap", "coefficients": [1, 1], "relation": "<=", "rhs": 1}]
    p = tmp_path / "infeasible.yaml"
    p.write_text(yaml.safe_dump(doc))
    code, _, err = run(capsys, "solve", str(p))
    assert code == cli.EXIT_SOLVER and "infeasible" in err


def test_certification_failure(capsys, drex_file, monkeypatch):
    def boom(*a, **k):
        raise CertificationError("gap too large", 1.0, 2.0)

    monkeypatch.setattr(cli, "solve_reference", boom)
    code, _, err = run(capsys, "solve", drex_file)
    assert code == cli.EXIT_CERT and "certification" in err


def test_dimension_mismatch(capsys, drex_file):
    assert run(capsys, "eval", drex_file, "--x", "1,2,3")[0] == cli.EXIT_USAGE
    assert run(capsys, "eval", drex_file, "--x", "1,a")[0] == cli.EXIT_USAGE


# commands ----------------------------------------------------------------

def test_eval_worked_example(capsys, drex_file):
    code, out, _ = run(capsys, "eval", drex_file, "--x", "2.74,3.3", "--json")
    assert code == 0
    rep = json.loads(out)
    assert rep["objective"]["value"] == pytest.approx(20.39, abs=0.05)
    pts = sorted(rep["objective"]["distribution"], key=lambda d: d["scenario"][0])
    assert [d["mass"] for d in pts] == pytest.approx([0.5, 0.5])
    assert pts[0]["scenario"] == pytest.approx([3.5, 2.5], abs=0.02)
    assert pts[1]["scenario"] == pytest.approx([5.15, 2.68], abs=0.02)
    assert rep["feasible"]


def test_eval_text_report(capsys, drex_file):
    code, out, _ = run(capsys, "eval", drex_file, "--x", "2.74,3.3")
    assert code == 0 and "objective worst expectation 20.39" in out and out.count("scenario") == 2


def test_eval_origin_is_zero(capsys, tmp_path):
    doc = yaml.safe_load(cli.example_text("drex"))
    for v in doc["variables"]:
        v["lower"] = 0
    p = tmp_path / "d.yaml"
    p.write_text(yaml.safe_dump(doc))
    code, out, _ = run(capsys, "eval", str(p), "--x", "0,0", "--json")
    assert code == 0 and json.loads(out)["objective"]["value"] == 0.0


def test_eval_matches_library(capsys, drex_file, rng):
    from possdro.interval import LevelGrid, worst_expectation
    from conftest import worked_model

    for _ in range(5):
        x = rng.uniform(0, 5, 2)
        code, out, _ = run(capsys, "eval", drex_file, "--x", ",".join(repr(float(v)) for v in x), "--json")
        ref = worst_expectation(worked_model(), LevelGrid(2), x).value
        assert json.loads(out)["objective"]["value"] == pytest.approx(ref, abs=1e-6)


def test_solve_worked_example(capsys, drex_file):
    code, out, _ = run(capsys, "solve", drex_file, "--json")
    assert code == 0
    rep = json.loads(out)
    assert rep["status"] == "optimal" and rep["engine"] == "reference"
    x = rep["evaluation"]["x"]
    assert [x["x1"], x["x2"]] == pytest.approx([2.74, 3.3], abs=1e-4)
    assert rep["value"] == pytest.approx(20.39, abs=0.05)
    assert rep["gap"] <= 1e-5 * (1 + abs(rep["value"]))


def test_solve_text_report(capsys, drex_file):
    code, out, _ = run(capsys, "solve", drex_file)
    assert code == 0 and out.startswith("status optimal") and "optimal value 20.39" in out


def test_solve_backend_engine(capsys, drex_file):
    pytest.importorskip("cvxpy")
    code, out, _ = run(capsys, "solve", drex_file, "--engine", "backend", "--backend", "cvxpy", "--json")
    assert code == 0
    x = json.loads(out)["evaluation"]["x"]
    assert [x["x1"], x["x2"]] == pytest.approx([2.74, 3.3], abs=1e-4)


def test_reformulate(capsys, drex_file, tmp_path):
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    code, _, err = run(capsys, "reformulate", drex_file, "-o", str(out1))
    assert code == 0 and "lift: objective lifted to t" in err and "3 cone blocks" in err
    run(capsys, "reformulate", drex_file, "-o", str(out2))
    assert out1.read_bytes() == out2.read_bytes()
    code, out, _ = run(capsys, "reformulate", drex_file, "-o", "-")
    assert out.encode() == out1.read_bytes()
    assert len(json.loads(out)["cones"]) == 3


def test_example_command(capsys, tmp_path):
    code, out, _ = run(capsys, "example", "portfolio")
    assert code == 0 and "covariance" in out
    p = tmp_path / "d.yaml"
    assert run(capsys, "example", "drex", "-o", str(p))[0] == 0
    assert p.read_text() == cli.example_text("drex")


def test_module_entry_point(drex_file):
    res = subprocess.run([sys.executable, "-m", "possdro", "eval", drex_file, "--x", "2.74,3.3"],
                         capture_output=True, text=True, timeout=120)
    assert res.returncode == 0 and "20.39" in res.stdout


# sweeps ------------------------------------------------------------------

def test_parse_grid():
    assert cli.parse_grid("0:1:0.25", "gamma") == [0, 0.25, 0.5, 0.75, 1.0]
    assert cli.parse_grid("0.1:0.9:0.1", "rho") == pytest.approx(np.arange(1, 10) / 10)
    assert len(cli.parse_grid("0:50:1", "gamma")) == 51
    assert cli.parse_grid("2,4,8", "ell") == [2, 4, 8]
    for text, param in [("0:1:0.5", "rho"), ("1.5", "ell"), ("-1", "gamma"), ("3:1:1", "gamma"),
                        ("a,b", "gamma"), ("0:1:0", "gamma")]:
        with pytest.raises(cli.CommandError) as exc:
            cli.parse_grid(text, param)
        assert exc.value.code == cli.EXIT_USAGE


def test_sweep_bad_range_exit_code(capsys, drex_file):
    assert run(capsys, "sweep", drex_file, "--param", "rho", "--grid", "0:1:0.5", "-o", "-")[0] == cli.EXIT_USAGE


def test_sweep_needs_interval_model(capsys, tmp_path):
    from test_io import DISCRETE_DOC

    p = tmp_path / "d.yaml"
    p.write_text(DISCRETE_DOC)
    assert run(capsys, "sweep", str(p), "--param", "gamma", "--grid", "1", "-o", "-")[0] == cli.EXIT_DOCUMENT


def test_single_point_sweep_equals_solve(capsys, portfolio_file):
    code, out, _ = run(capsys, "sweep", portfolio_file, "--param", "gamma", "--grid", "20", "-o", "-")
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 2
    code, sout, _ = run(capsys, "solve", portfolio_file, "--json")
    rep = json.loads(sout)
    assert float(rows[1][1]) == pytest.approx(rep["value"], rel=1e-9)
    assert [float(v) for v in rows[1][5:]] == pytest.approx(list(rep["evaluation"]["x"].values()), abs=1e-9)


def test_rho_sweep_nonincreasing(capsys, portfolio_file, tmp_path):
    out = tmp_path / "rho.csv"
    code, _, err = run(capsys, "sweep", portfolio_file, "--param", "rho", "--grid", "0.1:0.9:0.1", "-o", str(out))
    assert code == 0 and "9 rows" in err
    rows = read_csv(out.read_text())[1:]
    assert len(rows) == 9
    # compare certified bounds: a later value may exceed an earlier one only within the solve tolerance
    vals = np.array([float(r[1]) for r in rows])
    assert np.all(np.diff(vals) <= 1e-5 * (1 + np.abs(vals[1:])))


def test_csv_format(capsys, drex_file, tmp_path):
    out = tmp_path / "g.csv"
    run(capsys, "sweep", drex_file, "--param", "gamma", "--grid", "0:6:3", "-o", str(out))
    raw = out.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")


@pytest.mark.parametrize("name,param,grid", [("portfolio", "gamma", "0,10,20,50"), ("drex", "gamma", "0:6:3")])
def test_golden_csv(capsys, tmp_path, name, param, grid):
    src = tmp_path / f"{name}.yaml"
    src.write_text(cli.example_text(name))
    code, out, _ = run(capsys, "sweep", str(src), "--param", param, "--grid", grid, "-o", "-")
    assert code == 0
    got = read_csv(out)
    want = read_csv((GOLDEN / f"{name}_{param}.csv").read_text())
    assert got[0] == want[0]
    assert len(got) == len(want)
    for g, w in zip(got[1:], want[1:]):
        assert g[0] == w[0] and g[4] == w[4]
        assert [float(v) for v in g[1:4]] == pytest.approx([float(v) for v in w[1:4]], rel=1e-5, abs=1e-6)
        assert [float(v) for v in g[5:]] == pytest.approx([float(v) for v in w[5:]], abs=1e-3)


def test_golden_analytic_points():
    # independent checks on the frozen file: zero budget gives the nominal optimum
    rows = read_csv((GOLDEN / "portfolio_gamma.csv").read_text())
    assert float(rows[1][1]) == pytest.approx(-0.324, abs=1e-12)
    assert [float(v) for v in rows[1][5:]] == [0, 0, 1, 0, 0, 0, 0]
    rows = read_csv((GOLDEN / "drex_gamma.csv").read_text())
    assert float(rows[1][1]) == pytest.approx(3 * 2.74 + 2 * 3.3)
