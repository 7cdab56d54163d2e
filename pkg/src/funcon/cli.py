"""Command-line front end: declarative problem configs, the benchmark suite,
and plot-data emission.

Config files are YAML with a fixed schema (see README); unknown keys are
rejected with the offending key named.  Exit codes: 0 success, 1 config or
usage error, 2 solver non-convergence (the report is still written).
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import sys

import click
import numpy as np
import yaml

from funcon import exprfn, problems
from funcon.desolve import (
    BasisSpec,
    ConstraintSpec,
    DeProblem,
    DependentVar,
    ElmSpec,
    ExtraUnknown,
    IndependentVar,
    ProblemBuild,
    SolveReport,
    solve,
)

__all__ = ["main", "ConfigError", "load_config", "problem_from_config",
           "canonical_config", "run_suite", "SUITES"]


class ConfigError(ValueError):
    """Schema violation; message names the offending key/path."""


def _require(mapping, path, required, optional=()):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path}: expected a mapping")
    allowed = set(required) | set(optional)
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"{path}: unknown key {key!r}")
    for key in required:
        if key not in mapping:
            raise ConfigError(f"{path}: missing required key {key!r}")


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _expression(value, path):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        try:
            exprfn.parse(value)
        except exprfn.ExprSyntaxError as err:
            raise ConfigError(f"{path}: {err}") from err
        return value
    raise ConfigError(f"{path}: expected a number or expression string")


def load_config(path_or_stream):
    if hasattr(path_or_stream, "read"):
        return yaml.safe_load(path_or_stream)
    with open(path_or_stream, "r", encoding="utf-8") as fh:
        return yaml.safe_load(fh)


def problem_from_config(doc) -> DeProblem:
    """Validate a parsed config document and build the DeProblem."""
    _require(doc, "config",
             required=("name", "independent", "dependent", "residuals"),
             optional=("params", "extras", "solver", "analytic",
                       "test_points", "seed"))
    indep = []
    names = []
    for i, item in enumerate(doc["independent"]):
        p = f"independent[{i}]"
        _require(item, p, ("name", "interval", "points"), ("spacing",))
        name = item["name"]
        if not (isinstance(name, str) and len(name) == 1 and name.isalpha()):
            raise ConfigError(
                f"{p}.name: independent variables need single-letter names "
                f"(partial tags are letter suffixes), got {name!r}")
        lo, hi = (_number(v, f"{p}.interval") for v in item["interval"])
        spacing = item.get("spacing", "cgl")
        if spacing not in ("cgl", "uniform"):
            raise ConfigError(f"{p}.spacing: must be 'cgl' or 'uniform'")
        indep.append(IndependentVar(name, (lo, hi), int(item["points"]), spacing))
        names.append(name)

    deps = []
    for i, item in enumerate(doc["dependent"]):
        p = f"dependent[{i}]"
        _require(item, p, ("name", "basis", "constraints"), ("supports",))
        basis = _basis_from_config(item["basis"], f"{p}.basis")
        cons = []
        for j, c in enumerate(item.get("constraints") or ()):
            cp = f"{p}.constraints[{j}]"
            _require(c, cp, ("dim", "terms", "value"))
            if c["dim"] not in names:
                raise ConfigError(f"{cp}.dim: unknown dimension {c['dim']!r}")
            terms = []
            for k, t in enumerate(c["terms"]):
                tp = f"{cp}.terms[{k}]"
                _require(t, tp, (), ("order", "at", "coeff", "integral",
                                     "integral_over"))
                if "at" not in t and "integral" not in t:
                    raise ConfigError(f"{tp}: needs 'at' or 'integral'")
                terms.append(dict(t))
            cons.append(ConstraintSpec(c["dim"], tuple(terms),
                                       _expression(c["value"], f"{cp}.value")))
        supports = {k: tuple(v) for k, v in (item.get("supports") or {}).items()}
        deps.append(DependentVar(item["name"], tuple(cons), basis, supports))

    residuals = tuple(_expression(r, f"residuals[{i}]")
                      for i, r in enumerate(doc["residuals"]))
    params = {k: _number(v, f"params.{k}")
              for k, v in (doc.get("params") or {}).items()}
    extras = []
    for i, e in enumerate(doc.get("extras") or ()):
        p = f"extras[{i}]"
        _require(e, p, ("name", "init"), ("lower", "upper"))
        extras.append(ExtraUnknown(
            e["name"], _number(e["init"], f"{p}.init"),
            None if e.get("lower") is None else _number(e["lower"], p),
            None if e.get("upper") is None else _number(e["upper"], p)))

    solver = doc.get("solver") or {}
    _require(solver, "solver", (), ("method", "mode", "nlls_tol",
                                    "nlls_max_iter", "force_nonlinear"))
    analytic = {k: _expression(v, f"analytic.{k}")
                for k, v in (doc.get("analytic") or {}).items()}
    test_points = doc.get("test_points")
    if test_points is not None:
        test_points = tuple(int(c) for c in test_points)
        if len(test_points) != len(indep):
            raise ConfigError("test_points: one count per independent variable")

    return DeProblem(
        name=str(doc["name"]),
        independent=tuple(indep),
        dependent=tuple(deps),
        residuals=residuals,
        params=params,
        extras=tuple(extras),
        method=solver.get("method", "svd-pinv"),
        mode=solver.get("mode", "embedded"),
        nlls_tol=float(solver.get("nlls_tol", 1e-13)),
        nlls_max_iter=int(solver.get("nlls_max_iter", 50)),
        analytic=analytic,
        test_points=test_points,
        force_nonlinear=bool(solver.get("force_nonlinear", False)),
    )


def _basis_from_config(item, path):
    _require(item, path, ("family",),
             ("degree", "removal", "activation", "neurons", "seed",
              "init_range"))
    family = item["family"]
    if family == "elm":
        return ElmSpec(item.get("activation", "tanh"),
                       int(item.get("neurons", 100)),
                       int(item.get("seed", 0)),
                       tuple(item.get("init_range", (-1.0, 1.0))))
    removal = {k: (int(v) if isinstance(v, int) else tuple(v))
               for k, v in (item.get("removal") or {}).items()}
    return BasisSpec(family, int(item.get("degree", 10)), removal)


def canonical_config(problem: DeProblem, seed=None) -> dict:
    """Emit a config document that re-parses to the same problem."""
    doc = {
        "name": problem.name,
        "independent": [
            {"name": v.name, "interval": [v.interval[0], v.interval[1]],
             "points": v.points, "spacing": v.spacing}
            for v in problem.independent],
        "dependent": [],
        "residuals": [r if isinstance(r, str) else exprfn.to_source(r)
                      for r in problem.residuals],
        "solver": {"method": problem.method, "mode": problem.mode,
                   "nlls_tol": problem.nlls_tol,
                   "nlls_max_iter": problem.nlls_max_iter},
    }
    for dep in problem.dependent:
        basis = dep.basis
        if isinstance(basis, ElmSpec):
            bdoc = {"family": "elm", "activation": basis.activation,
                    "neurons": basis.neurons, "seed": basis.seed,
                    "init_range": list(basis.init_range)}
        else:
            bdoc = {"family": basis.family, "degree": basis.degree}
            if basis.removal:
                bdoc["removal"] = {k: (v if isinstance(v, int) else list(v))
                                   for k, v in basis.removal.items()}
        cdocs = []
        for c in dep.constraints:
            cdocs.append({"dim": c.dim, "terms": [dict(t) for t in c.terms],
                          "value": c.value})
        ddoc = {"name": dep.name, "basis": bdoc, "constraints": cdocs}
        if dep.supports:
            ddoc["supports"] = {k: list(v) for k, v in dep.supports.items()}
        doc["dependent"].append(ddoc)
    if problem.params:
        doc["params"] = dict(problem.params)
    if problem.extras:
        doc["extras"] = [{"name": e.name, "init": e.init,
                          "lower": e.lower, "upper": e.upper}
                         for e in problem.extras]
    if problem.analytic:
        doc["analytic"] = dict(problem.analytic)
    if problem.test_points:
        doc["test_points"] = list(problem.test_points)
    if seed is not None:
        doc["seed"] = seed
    return doc


def report_to_dict(report: SolveReport, problem: DeProblem) -> dict:
    return {
        "problem": report.problem,
        "config": canonical_config(problem, seed=report.seed),
        "xi": {k: list(map(float, v)) for k, v in report.xi.items()},
        "extras": {k: float(v) for k, v in report.extras.items()},
        "metrics": {
            "max_residual": report.max_residual,
            "mean_residual": report.mean_residual,
            "max_error": report.max_error,
            "mean_error": report.mean_error,
            "iterations": report.iterations,
            "reason": report.reason,
            "wall_seconds": report.wall_seconds,
            "columns": report.columns,
            "training_points": report.training_points,
        },
    }


def _write_report(report, problem, out, fmt):
    doc = report_to_dict(report, problem)
    if fmt == "json":
        text = json.dumps(doc, indent=2)
    else:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["key", "value"])
        for k, v in doc["metrics"].items():
            w.writerow([k, v])
        text = buf.getvalue()
    if out == "-":
        sys.stdout.write(text + "\n")
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# benchmark suites

RESULT_COLUMNS = ("problem", "n", "m", "max_error", "mean_error",
                  "max_residual", "iterations", "wall_seconds", "seed")


def _row(problem_id, n, m, rep, seed=None):
    return {
        "problem": problem_id, "n": n, "m": m,
        "max_error": rep.max_error, "mean_error": rep.mean_error,
        "max_residual": rep.max_residual, "iterations": rep.iterations,
        "wall_seconds": rep.wall_seconds, "seed": seed,
    }


def _suite_simple_pde(seeds):
    rows = []
    for n in (5, 10, 15, 20, 25, 30):
        for m in (5, 10, 15, 20, 25):
            if m > n:
                continue  # infeasible cells are skipped
            rep = solve(problems.simple_pde(n, m))
            rows.append(_row("simple-pde", n, m, rep))
    return rows


def _suite_simple_pde_spectral(seeds):
    rep = solve(problems.simple_pde(15, 15, mode="spectral"))
    return [_row("simple-pde-spectral", 15, 15, rep)]


def _best_of(rows):
    best = min(rows, key=lambda r: r["max_error"])
    summary = dict(best)
    summary["seed"] = "best"
    return rows + [summary]


def _suite_simple_pde_xtfc(seeds):
    rows = []
    for seed in seeds:
        rep = solve(problems.simple_pde_xtfc(15, 132, seed), seed=seed)
        rows.append(_row("simple-pde-xtfc", 15, 132, rep, seed))
    return _best_of(rows)


def _suite_wave1d(seeds):
    rep = solve(problems.wave1d())
    return [_row("wave1d", 30, 20, rep)]


def _suite_wave2d(seeds):
    rep = solve(problems.wave2d_tfc())
    return [_row("wave2d", 11, 9, rep)]


def _suite_wave2d_xtfc(seeds):
    rows = []
    for seed in seeds:
        rep = solve(problems.wave2d_xtfc(11, 650, seed), seed=seed)
        rows.append(_row("wave2d-xtfc", 11, 650, rep, seed))
    return _best_of(rows)


def _suite_biharmonic_cart(seeds):
    rep = solve(problems.biharmonic_cartesian())
    return [_row("biharmonic-cart", 20, 26, rep)]


def _suite_biharmonic_polar(seeds):
    rep = solve(problems.biharmonic_polar())
    return [_row("biharmonic-polar", 30, 30, rep)]


def _suite_convection_diffusion(seeds):
    from funcon.desolve import solve_split
    rows = []
    for pe in (1.0, 1e6):
        rep = solve(problems.convection_diffusion(pe))
        rows.append(_row(f"convdiff-pe{pe:g}-whole", 200, 190, rep))
        prob, split = problems.convection_diffusion_split(pe)
        rep = solve_split(prob, split)
        rows.append(_row(f"convdiff-pe{pe:g}-split", 200, 190, rep))
    return rows


def _suite_balloon(seeds):
    rows = []
    state = None
    for alt in sorted(problems.BALLOON_ATMOSPHERE):
        rep, state = problems.solve_balloon(alt, warm_start=state)
        rows.append(_row(f"balloon-{alt}km", 140, 50, rep))
    return rows


SUITES = {
    "simple-pde": _suite_simple_pde,
    "simple-pde-spectral": _suite_simple_pde_spectral,
    "simple-pde-xtfc": _suite_simple_pde_xtfc,
    "wave1d": _suite_wave1d,
    "wave2d": _suite_wave2d,
    "wave2d-xtfc": _suite_wave2d_xtfc,
    "biharmonic-cart": _suite_biharmonic_cart,
    "biharmonic-polar": _suite_biharmonic_polar,
    "convection-diffusion": _suite_convection_diffusion,
    "balloon": _suite_balloon,
}


def run_suite(name, seeds=range(10)):
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; options: {sorted(SUITES)}")
    return SUITES[name](list(seeds))


def _emit_result_table(rows, out):
    text = io.StringIO()
    w = csv.DictWriter(text, fieldnames=RESULT_COLUMNS)
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k) for k in RESULT_COLUMNS})
    data = text.getvalue()
    if out == "-":
        sys.stdout.write(data)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(data)


# ---------------------------------------------------------------------------
# commands

@click.group()
def main():
    """Constraint-embedding DE solver."""


@main.command("solve")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", default="-")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
              default="json")
def cmd_solve(config_path, out_path, fmt):
    """Solve a declarative problem config and write the report."""
    try:
        doc = load_config(config_path)
        problem = problem_from_config(doc)
    except (ConfigError, yaml.YAMLError) as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(1)
    seed = (doc or {}).get("seed", 0)
    report = solve(problem, seed=seed)
    _write_report(report, problem, out_path, fmt)
    sys.exit(0 if report.converged else 2)


@main.command("bench")
@click.option("--suite", required=True)
@click.option("--out", "out_path", default="-")
@click.option("--seeds", default="0..9", help="seed range lo..hi for "
              "stochastic suites")
def cmd_bench(suite, out_path, seeds):
    """Run a benchmark suite and emit its result table."""
    try:
        lo, hi = (int(s) for s in seeds.split(".."))
        rows = run_suite(suite, range(lo, hi + 1))
    except KeyError as err:
        click.echo(f"error: {err.args[0]}", err=True)
        sys.exit(1)
    _emit_result_table(rows, out_path)
    sys.exit(0)


@main.command("plotdata")
@click.option("--report", "report_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", default="-")
def cmd_plotdata(report_path, out_path):
    """Sample a solved report on its test grid as CSV for external plotting."""
    with open(report_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        problem = problem_from_config(doc["config"])
    except ConfigError as err:
        click.echo(f"report error: {err}", err=True)
        sys.exit(1)
    rows = plot_rows(problem, doc)
    text = io.StringIO()
    w = csv.writer(text)
    for row in rows:
        w.writerow(row)
    if out_path == "-":
        sys.stdout.write(text.getvalue())
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text.getvalue())
    sys.exit(0)


def plot_rows(problem: DeProblem, doc):
    """Header + data rows: coordinates, solution, and (when an analytic
    solution is declared) the truth and absolute error."""
    if problem.test_points is None:
        problem = dataclasses.replace(
            problem, test_points=tuple(100 for _ in problem.independent))
    bld = ProblemBuild(problem)
    pts = bld.test_grid()
    extras = {k: float(v) for k, v in doc.get("extras", {}).items()}
    names = [v.name for v in problem.independent]
    out_rows = []
    header = list(names)
    preds = {}
    truths = {}
    xi_full = np.zeros(bld.layout.width)
    for dep in problem.dependent:
        xi_full[bld.layout.slice_of(dep.name)] = doc["xi"][dep.name]
    for dep in problem.dependent:
        preds[dep.name] = bld.evaluate_solution(dep.name, pts, xi_full, extras)
        header.append(dep.name)
        if dep.name in problem.analytic:
            expr = exprfn.parse(str(problem.analytic[dep.name])) \
                if isinstance(problem.analytic[dep.name], str) \
                else problem.analytic[dep.name]
            bindings = bld.base_bindings(pts, extras)
            truths[dep.name] = np.broadcast_to(np.asarray(
                exprfn.evaluate(expr, bindings), dtype=float), (pts.shape[0],))
            header.append(dep.name + "_true")
            header.append("abs_error_" + dep.name)
    out_rows.append(header)
    for i in range(pts.shape[0]):
        row = [repr(float(v)) for v in pts[i]]
        for dep in problem.dependent:
            row.append(repr(float(preds[dep.name][i])))
            if dep.name in truths:
                t = float(truths[dep.name][i])
                row.append(repr(t))
                row.append(repr(abs(float(preds[dep.name][i]) - t)))
        out_rows.append(row)
    return out_rows


if __name__ == "__main__":
    main()
