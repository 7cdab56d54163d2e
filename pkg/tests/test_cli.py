import csv
import io
import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from funcon import cli

SIMPLE_CONFIG = """
name: simple-pde
independent:
  - {name: x, interval: [0.0, 1.0], points: 8}
  - {name: y, interval: [0.0, 1.0], points: 8}
dependent:
  - name: u
    basis: {family: chebyshev, degree: 8}
    constraints:
      - {dim: x, terms: [{order: 0, at: 0.0}], value: "y^3"}
      - {dim: x, terms: [{order: 0, at: 1.0}], value: "(1 + y^3)*exp(-1)"}
      - {dim: y, terms: [{order: 0, at: 0.0}], value: "x*exp(-x)"}
      - {dim: y, terms: [{order: 0, at: 1.0}], value: "exp(-x)*(x + 1)"}
residuals:
  - "u_xx + u_yy - exp(-x)*(x - 2 + y^3 + 6*y)"
analytic: {u: "exp(-x)*(x + y^3)"}
test_points: [25, 25]
seed: 0
"""


@pytest.fixture
def runner():
    return CliRunner()


def _write(tmp_path, text, name="config.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_solve_writes_json_report(tmp_path, runner):
    cfg = _write(tmp_path, SIMPLE_CONFIG)
    out = tmp_path / "report.json"
    result = runner.invoke(cli.main, ["solve", "--config", cfg,
                                      "--out", str(out), "--format", "json"])
    assert result.exit_code == 0, result.output
    doc = json.loads(out.read_text())
    assert doc["metrics"]["max_error"] < 1e-6
    assert doc["xi"]["u"]
    assert doc["config"]["name"] == "simple-pde"


def test_unknown_key_is_named_and_exits_1(tmp_path, runner):
    cfg = _write(tmp_path, SIMPLE_CONFIG.replace("residuals:", "residualss:"))
    result = runner.invoke(cli.main, ["solve", "--config", cfg])
    assert result.exit_code == 1
    assert "residualss" in result.output


def test_bad_expression_positioned(tmp_path, runner):
    cfg = _write(tmp_path, SIMPLE_CONFIG.replace(
        '"y^3"', '"y ^* 3"'))
    result = runner.invoke(cli.main, ["solve", "--config", cfg])
    assert result.exit_code == 1
    assert "offset" in result.output


def test_nonconvergent_nonlinear_exits_2(tmp_path, runner):
    doc = yaml.safe_load(SIMPLE_CONFIG)
    doc["residuals"] = ["u_xx + u_yy + u^2 + 10"]  # no solution nearby
    del doc["analytic"]
    doc["solver"] = {"nlls_max_iter": 3, "method": "lstsq-cutoff"}
    cfg = _write(tmp_path, yaml.safe_dump(doc))
    out = tmp_path / "r.json"
    result = runner.invoke(cli.main, ["solve", "--config", cfg,
                                      "--out", str(out)])
    assert result.exit_code == 2
    assert out.exists()  # report still written
    rep = json.loads(out.read_text())
    assert rep["metrics"]["reason"] == "max-iterations"


def test_config_round_trip():
    problem = cli.problem_from_config(yaml.safe_load(SIMPLE_CONFIG))
    doc = cli.canonical_config(problem, seed=0)
    again = cli.problem_from_config(doc)
    assert again == problem
    # canonical emission is stable
    assert cli.canonical_config(again, seed=0) == doc


def test_plotdata_matches_report(tmp_path, runner):
    cfg = _write(tmp_path, SIMPLE_CONFIG)
    out = tmp_path / "report.json"
    runner.invoke(cli.main, ["solve", "--config", cfg, "--out", str(out)])
    plot = tmp_path / "plot.csv"
    result = runner.invoke(cli.main, ["plotdata", "--report", str(out),
                                      "--out", str(plot)])
    assert result.exit_code == 0
    rows = list(csv.reader(io.StringIO(plot.read_text())))
    header, data = rows[0], rows[1:]
    assert header == ["x", "y", "u", "u_true", "abs_error_u"]
    assert len(data) == 25 * 25
    errs = np.array([float(r[4]) for r in data])
    rep = json.loads(out.read_text())
    # max |error| column equals the report's max_error (same grid)
    assert errs.max() == pytest.approx(rep["metrics"]["max_error"], rel=1e-12)


def test_plotdata_without_analytic_omits_truth_columns(tmp_path, runner):
    doc = yaml.safe_load(SIMPLE_CONFIG)
    del doc["analytic"]
    cfg = _write(tmp_path, yaml.safe_dump(doc))
    out = tmp_path / "r.json"
    runner.invoke(cli.main, ["solve", "--config", cfg, "--out", str(out)])
    plot = tmp_path / "p.csv"
    runner.invoke(cli.main, ["plotdata", "--report", str(out),
                             "--out", str(plot)])
    header = plot.read_text().splitlines()[0].split(",")
    assert header == ["x", "y", "u"]


def test_unknown_suite_exits_1(runner):
    result = runner.invoke(cli.main, ["bench", "--suite", "nope"])
    assert result.exit_code == 1
    assert "unknown suite" in result.output


def test_bench_deterministic_modulo_wall_time(tmp_path, runner):
    outs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        result = runner.invoke(cli.main, ["bench", "--suite", "wave1d",
                                          "--out", str(out)])
        assert result.exit_code == 0
        rows = list(csv.reader(io.StringIO(out.read_text())))
        drop = rows[0].index("wall_seconds")
        outs.append([tuple(v for i, v in enumerate(r) if i != drop)
                     for r in rows])
    assert outs[0] == outs[1]


def test_result_table_columns():
    rows = cli.run_suite("wave1d")
    assert len(rows) == 1
    assert set(cli.RESULT_COLUMNS) >= set(rows[0].keys())
    assert rows[0]["mean_error"] < 1e-12


def test_elm_basis_via_config(tmp_path, runner):
    doc = yaml.safe_load(SIMPLE_CONFIG)
    doc["dependent"][0]["basis"] = {"family": "elm", "activation": "tanh",
                                    "neurons": 62, "seed": 0}
    doc["solver"] = {"method": "lstsq-cutoff"}
    cfg = _write(tmp_path, yaml.safe_dump(doc))
    out = tmp_path / "r.json"
    result = runner.invoke(cli.main, ["solve", "--config", cfg,
                                      "--out", str(out)])
    assert result.exit_code == 0, result.output
    rep = json.loads(out.read_text())
    assert rep["metrics"]["max_error"] < 1e-6
    assert len(rep["xi"]["u"]) == 62


def test_convection_diffusion_suite_has_four_rows():
    rows = cli.run_suite("convection-diffusion")
    assert [r["problem"] for r in rows] == [
        "convdiff-pe1-whole", "convdiff-pe1-split",
        "convdiff-pe1e+06-whole", "convdiff-pe1e+06-split"]
    by_name = {r["problem"]: r for r in rows}
    assert by_name["convdiff-pe1-whole"]["max_error"] <= 1e-13
    assert by_name["convdiff-pe1e+06-split"]["max_error"] <= 1e-9
    # the whole-domain run at Pe=1e6 is the documented failure case
    assert by_name["convdiff-pe1e+06-whole"]["max_error"] > 1e-2


def test_independent_names_must_be_single_letters():
    doc = yaml.safe_load(SIMPLE_CONFIG)
    doc["independent"][0]["name"] = "xx"
    with pytest.raises(cli.ConfigError, match="single-letter"):
        cli.problem_from_config(doc)


def test_simple_pde_sweep_produces_20_feasible_rows():
    # cells with m > n are skipped exactly like the reference table
    rows = cli.run_suite("simple-pde")
    assert len(rows) == 20
    cells = [(r["n"], r["m"]) for r in rows]
    expected = [(n, m) for n in (5, 10, 15, 20, 25, 30)
                for m in (5, 10, 15, 20, 25) if m <= n]
    assert cells == expected
    # headline cell reproduces the reference accuracy
    best = {(r["n"], r["m"]): r["max_error"] for r in rows}
    assert best[(15, 15)] <= 1e-13
    assert best[(5, 5)] < 1e-2
