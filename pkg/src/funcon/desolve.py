"""Differential-equation problem assembly and solution.

A ``DeProblem`` declares independent variables with grids, dependent
variables with constraints and a free-function family, residual expressions
over the dependent variables' partials, optional clamped scalar extras, and
solver settings.  ``solve`` dispatches between one-shot linear least squares
(affine residuals, no extras) and Gauss-Newton, evaluates errors on a uniform
test grid (endpoints included), and returns a ``SolveReport``.

Constraints hold at machine precision by construction whenever the mode is
"embedded"; "spectral" mode skips the constrained expression and instead
appends one constraint row per boundary training point.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field
from itertools import product

import numpy as np

from funcon import exprfn
from funcon import multivar
from funcon.basis import (
    BasisFamily,
    DomainMap,
    ElmFamily,
    ElmFeature,
    TensorFeature,
    cgl_nodes,
    uniform_nodes,
)
from funcon.constraint_core import (
    Constraint,
    ConstraintOperator,
    DefiniteIntegral,
    ExprKappa,
    FeatureField,
    FieldContext,
    MonomialSupports,
    PointDeriv,
    UnknownLayout,
    _apply_op_to_field,
    as_kappa,
)
from funcon.exprfn import Expr
from funcon.solvers import NllsConfig, NllsResult, lstsq, nlls

__all__ = [
    "NonAffineResidualError",
    "IndependentVar",
    "BasisSpec",
    "ElmSpec",
    "ConstraintSpec",
    "DependentVar",
    "ExtraUnknown",
    "DeProblem",
    "SolveReport",
    "SplitSpec",
    "ProblemBuild",
    "assemble_linear",
    "assemble_nonlinear",
    "solve",
    "solve_split",
    "clamp_scalar",
    "InequalityClamp",
]


class NonAffineResidualError(ValueError):
    """Residual contains products or nonlinear functions of the unknowns."""


def _as_expr(e):
    return e if isinstance(e, Expr) else exprfn.parse(str(e))


# ---------------------------------------------------------------------------
# problem declaration

@dataclass(frozen=True)
class IndependentVar:
    name: str
    interval: tuple
    points: int
    spacing: str = "cgl"  # cgl | uniform

    def nodes(self):
        lo, hi = self.interval
        base = cgl_nodes(self.points) if self.spacing == "cgl" \
            else uniform_nodes(self.points)
        return lo + (base + 1.0) * 0.5 * (hi - lo)


@dataclass(frozen=True)
class BasisSpec:
    """Tensor-product polynomial/Fourier expansion with a total-degree cap."""

    family: str = "chebyshev"
    degree: int = 10
    removal: dict = dc_field(default_factory=dict)  # dim name -> spec override
    window: dict = dc_field(default_factory=dict)   # finite windows, if needed


@dataclass(frozen=True)
class ElmSpec:
    activation: str = "tanh"
    neurons: int = 100
    seed: int = 0
    init_range: tuple = (-1.0, 1.0)


@dataclass(frozen=True)
class ConstraintSpec:
    """Declarative constraint on one dimension of one dependent variable.

    ``terms`` are dicts: {"order": d, "at": a, "coeff": w} for point
    derivatives (optionally "integral_over": [dim, lo, hi]) or
    {"integral": [lo, hi], "coeff": w} for own-dimension integrals.
    ``value`` is kappa: a number, an expression string over the other
    independent variables / extras / params, or a kappa object.
    """

    dim: str
    terms: tuple
    value: object


@dataclass(frozen=True)
class DependentVar:
    name: str
    constraints: tuple
    basis: object  # BasisSpec | ElmSpec
    supports: dict = dc_field(default_factory=dict)  # dim name -> powers


@dataclass(frozen=True)
class ExtraUnknown:
    name: str
    init: float
    lower: float = None
    upper: float = None


@dataclass(frozen=True)
class DeProblem:
    name: str
    independent: tuple
    dependent: tuple
    residuals: tuple
    params: dict = dc_field(default_factory=dict)
    extras: tuple = ()
    method: str = "svd-pinv"
    mode: str = "embedded"  # embedded | spectral
    nlls_tol: float = 1e-13
    nlls_max_iter: int = 50
    analytic: dict = dc_field(default_factory=dict)  # dep name -> expression
    test_points: tuple = None  # per-dim counts, uniform; None disables errors
    force_nonlinear: bool = False


# ---------------------------------------------------------------------------
# construction

def _constraint_from_spec(spec: ConstraintSpec, dim_index: dict):
    specs = []
    for t in spec.terms:
        coeff = float(t.get("coeff", 1.0))
        if "integral" in t:
            lo, hi = t["integral"]
            specs.append(DefiniteIntegral(float(lo), float(hi), coeff))
        else:
            foreign = ()
            if "integral_over" in t:
                dname, lo, hi = t["integral_over"]
                foreign = ((dim_index[dname], float(lo), float(hi)),)
            specs.append(PointDeriv(int(t.get("order", 0)), float(t["at"]),
                                    coeff, foreign))
    value = spec.value
    if isinstance(value, str):
        value = exprfn.parse(value)
    kappa = as_kappa(value)
    if isinstance(kappa, ExprKappa) and \
            spec.dim in exprfn.free_variables(kappa.expr):
        raise ValueError(
            f"kappa for a constraint on {spec.dim!r} must not depend on "
            f"{spec.dim!r} itself: {exprfn.to_source(kappa.expr)!r}")
    return Constraint(ConstraintOperator(specs), kappa)


class ProblemBuild:
    """Everything derived from a DeProblem needed to assemble and evaluate."""

    def __init__(self, problem: DeProblem):
        self.problem = problem
        self.var_names = tuple(v.name for v in problem.independent)
        self.dim_index = {n: i for i, n in enumerate(self.var_names)}
        self.extras_spec = {e.name: e for e in problem.extras}

        sizes = []
        features = {}
        constraints = {}
        for dep in problem.dependent:
            cons_by_dim = {}
            for cs in dep.constraints:
                k = self.dim_index[cs.dim]
                cons_by_dim.setdefault(k, []).append(
                    _constraint_from_spec(cs, self.dim_index))
            constraints[dep.name] = cons_by_dim
            features[dep.name] = self._feature_for(dep, cons_by_dim)
            sizes.append(features[dep.name].count)
        self.layout = UnknownLayout(tuple(d.name for d in problem.dependent),
                                    tuple(sizes))
        self.ctx = FieldContext(self.var_names, self.layout.width,
                                dict(problem.params))

        self.fields = {}
        self.ces = {}
        for dep in problem.dependent:
            g = FeatureField(self.ctx, features[dep.name],
                             self.layout.slice_of(dep.name))
            if problem.mode == "spectral" or not constraints[dep.name]:
                self.fields[dep.name] = g
                self.ces[dep.name] = (None, {})
                continue
            supports = {self.dim_index[d]: MonomialSupports(p)
                        for d, p in dep.supports.items()}
            order, ces = multivar.build_dimension_ces(constraints[dep.name],
                                                      supports)
            ordered = [ces[k] for k in order.order if k in ces]
            self.fields[dep.name] = multivar.compose_recursive(ordered, g)
            self.ces[dep.name] = (order, ces)
        self.features = features
        self.constraints = constraints

        self._residuals = tuple(_as_expr(r) for r in problem.residuals)
        self._tags = self._collect_tags()

    def _maps(self, spec):
        from funcon.basis import NATIVE_DOMAINS
        z0, zf = NATIVE_DOMAINS[spec.family]
        maps = []
        for v in self.problem.independent:
            if v.name in spec.window:
                w0, wf = spec.window[v.name]
            elif np.isfinite(z0) and np.isfinite(zf):
                w0, wf = z0, zf
            else:
                raise ValueError(
                    f"{spec.family} has an infinite native domain; declare a "
                    f"finite window for {v.name!r} via BasisSpec.window")
            maps.append(DomainMap(v.interval[0], v.interval[1], w0, wf))
        return maps

    def _feature_for(self, dep, cons_by_dim):
        spec = dep.basis
        if isinstance(spec, ElmSpec):
            fam = ElmFamily(spec.activation, spec.neurons,
                            len(self.var_names), spec.seed,
                            spec.init_range[0], spec.init_range[1])
            maps = [DomainMap(v.interval[0], v.interval[1], 0.0, 1.0)
                    for v in self.problem.independent]
            return ElmFeature(fam, maps)
        families = []
        for i, v in enumerate(self.problem.independent):
            if self.problem.mode == "spectral":
                removal = 0  # no constrained expression, keep the full basis
            elif v.name in spec.removal:
                removal = spec.removal[v.name]
            else:
                removal = len(cons_by_dim.get(i, ()))
            families.append(BasisFamily(spec.family, spec.degree, removal))
        return TensorFeature(families, self._maps(spec),
                             total_degree=spec.degree)

    # -- residual analysis ---------------------------------------------------

    def _collect_tags(self):
        dep_names = {d.name for d in self.problem.dependent}
        known = set(self.var_names) | set(self.problem.params) \
            | set(self.extras_spec) | dep_names
        tags = {}
        for r in self._residuals:
            for name in exprfn.free_variables(r):
                base, orders = exprfn.split_partial_tag(name)
                if base in dep_names:
                    bad = set(orders) - set(self.var_names)
                    if bad:
                        raise ValueError(
                            f"partial tag {name!r} differentiates along unknown "
                            f"dimensions {sorted(bad)}")
                    tags[name] = (base, tuple(orders.get(v, 0)
                                              for v in self.var_names))
                elif name not in known:
                    raise ValueError(f"unknown symbol {name!r} in residual")
        return tags

    def is_affine(self):
        return all(_affine_kind(r, set(self._tags)) != "nonlinear"
                   for r in self._residuals)

    # -- evaluation helpers ----------------------------------------------------

    def grid(self):
        axes = [v.nodes() for v in self.problem.independent]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def test_grid(self):
        counts = self.problem.test_points
        if counts is None:
            return None
        axes = [np.linspace(v.interval[0], v.interval[1], c)
                for v, c in zip(self.problem.independent, counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def clamp_extras(self, raw: dict):
        used, gates = {}, {}
        for name, value in raw.items():
            spec = self.extras_spec[name]
            used[name], gates[name] = clamp_scalar(value, spec.lower, spec.upper)
        return used, gates

    def partial_evals(self, pts, extras):
        out = {}
        for tag, (base, orders) in self._tags.items():
            out[tag] = self.fields[base].eval(pts, orders, extras)
        return out

    def base_bindings(self, pts, extras):
        b = dict(self.problem.params)
        for j, name in enumerate(self.var_names):
            b[name] = pts[:, j]
        if extras:
            b.update(extras)
        return b

    def evaluate_solution(self, dep_name, pts, xi, extras):
        ev = self.fields[dep_name].eval(pts, (0,) * len(self.var_names), extras)
        return ev.value(xi)


def _affine_kind(e, tags):
    """'const' (no unknowns), 'linear', or 'nonlinear' in the partial tags."""
    if isinstance(e, (exprfn.Num, exprfn.Const)):
        return "const"
    if isinstance(e, exprfn.Var):
        return "linear" if e.name in tags else "const"
    if isinstance(e, exprfn.Neg):
        return _affine_kind(e.arg, tags)
    if isinstance(e, exprfn.Call):
        k = _affine_kind(e.arg, tags)
        return "const" if k == "const" else "nonlinear"
    if isinstance(e, exprfn.Bin):
        a = _affine_kind(e.left, tags)
        b = _affine_kind(e.right, tags)
        if e.op in "+-":
            order = {"const": 0, "linear": 1, "nonlinear": 2}
            return max((a, b), key=order.get)
        if e.op == "*":
            if a == "const":
                return b
            if b == "const":
                return a
            return "nonlinear"
        if e.op == "/":
            if b == "const":
                return a
            return "nonlinear"
        if e.op == "^":
            if a == "const" and b == "const":
                return "const"
            if a == "linear" and isinstance(e.right, exprfn.Num) \
                    and e.right.value == 1.0:
                return "linear"
            return "nonlinear"
    raise AssertionError(type(e))


# ---------------------------------------------------------------------------
# assembly

def assemble_linear(bld: ProblemBuild, pts=None):
    """(A, b) for affine residuals; one row per residual per grid point.
    Columns are ordered dependent variable by dependent variable, retained
    basis index within."""
    problem = bld.problem
    if problem.extras:
        raise NonAffineResidualError("extras require the nonlinear path")
    tags = set(bld._tags)
    for r in bld._residuals:
        if _affine_kind(r, tags) == "nonlinear":
            raise NonAffineResidualError(
                f"residual {exprfn.to_source(r)!r} is not affine in the unknowns")
    pts = bld.grid() if pts is None else pts
    evals = bld.partial_evals(pts, {})
    bindings = bld.base_bindings(pts, {})
    zero_tags = {t: 0.0 for t in tags}
    blocks_A, blocks_b = [], []
    n = pts.shape[0]
    for r in bld._residuals:
        A = np.zeros((n, bld.layout.width))
        bvec = -np.broadcast_to(
            np.asarray(exprfn.evaluate(r, {**bindings, **zero_tags}),
                       dtype=float), (n,)).astype(float)
        for tag in tags & exprfn.free_variables(r):
            coeff = exprfn.differentiate(r, tag, 1)
            cvals = np.broadcast_to(
                np.asarray(exprfn.evaluate(coeff, {**bindings, **zero_tags}),
                           dtype=float), (n,))
            A += cvals[:, None] * evals[tag].rows
            bvec = bvec - cvals * evals[tag].offset
        blocks_A.append(A)
        blocks_b.append(bvec)
    A = np.vstack(blocks_A)
    b = np.concatenate(blocks_b)
    if problem.mode == "spectral":
        A2, b2 = _spectral_rows(bld, {})
        A = np.vstack([A, A2])
        b = np.concatenate([b, b2])
    return A, b


def _spectral_rows(bld: ProblemBuild, extras):
    """Constraint rows for spectral mode: each constraint sampled at every
    training node combination of the other dimensions."""
    rows, rhs = [], []
    axes = [v.nodes() for v in bld.problem.independent]
    nvars = len(axes)
    for dep in bld.problem.dependent:
        g = bld.fields[dep.name]
        for k, cons in bld.constraints[dep.name].items():
            other_axes = [axes[j] if j != k else np.array([0.0])
                          for j in range(nvars)]
            mesh = np.meshgrid(*other_axes, indexing="ij")
            pts = np.column_stack([m.ravel() for m in mesh])
            zero = (0,) * nvars
            for con in cons:
                lhs = _apply_op_to_field(con.operator, g, pts, zero, k, extras)
                kap = con.kappa.eval(bld.ctx, pts, zero, extras)
                rows.append(lhs.rows - kap.rows)
                rhs.append(kap.offset - lhs.offset)
    return np.vstack(rows), np.concatenate(rhs)


def assemble_nonlinear(bld: ProblemBuild, pts=None):
    """Residual and exact-Jacobian closures over the stacked unknown vector
    [xi..., extras...]; extras enter through kappas and residual symbols with
    symbolic partials, clamped extras through the Heaviside-zero gate."""
    problem = bld.problem
    pts = bld.grid() if pts is None else pts
    width = bld.layout.width
    extra_names = [e.name for e in problem.extras]
    bindings0 = bld.base_bindings(pts, {})
    n = pts.shape[0]
    has_extras = bool(extra_names)
    cached = None if has_extras else bld.partial_evals(pts, {})

    dcache = {}

    def dexpr(r, name):
        key = (id(r), name)
        if key not in dcache:
            dcache[key] = exprfn.differentiate(r, name, 1)
        return dcache[key]

    def unpack(q):
        xi = q[:width]
        raw = {nm: q[width + i] for i, nm in enumerate(extra_names)}
        used, gates = bld.clamp_extras(raw)
        return xi, used, gates

    def state(q):
        xi, extras, gates = unpack(q)
        evals = cached if cached is not None else bld.partial_evals(pts, extras)
        bindings = dict(bindings0)
        bindings.update(extras)
        for tag, ev in evals.items():
            bindings[tag] = ev.value(xi)
        return xi, extras, gates, evals, bindings

    def residual(q):
        _, _, _, _, bindings = state(q)
        out = [np.broadcast_to(np.asarray(exprfn.evaluate(r, bindings),
                                          dtype=float), (n,))
               for r in bld._residuals]
        return np.concatenate(out)

    def jacobian(q):
        xi, extras, gates, evals, bindings = state(q)
        blocks = []
        for r in bld._residuals:
            J = np.zeros((n, width + len(extra_names)))
            present = exprfn.free_variables(r)
            dfdt = {}
            for tag in bld._tags:
                if tag not in present:
                    continue
                c = np.broadcast_to(np.asarray(
                    exprfn.evaluate(dexpr(r, tag), bindings), dtype=float), (n,))
                dfdt[tag] = c
                J[:, :width] += c[:, None] * evals[tag].rows
            for i, nm in enumerate(extra_names):
                col = np.zeros(n)
                if nm in present:
                    col += np.broadcast_to(np.asarray(
                        exprfn.evaluate(dexpr(r, nm), bindings), dtype=float), (n,))
                for tag, c in dfdt.items():
                    g = evals[tag].grads.get(nm)
                    if g is not None:
                        col += c * g
                J[:, width + i] = col * gates[nm]
            blocks.append(J)
        return np.vstack(blocks)

    return residual, jacobian


# ---------------------------------------------------------------------------
# inequality clamping

def clamp_scalar(value, lower=None, upper=None):
    """Clamp with the zero-derivative convention at the active bound.
    Returns (clamped value, gate) with gate 1 when the raw value is inside."""
    if lower is not None and upper is not None and lower > upper:
        raise ValueError("inconsistent clamp bounds")
    if lower is not None and value < lower:
        return lower, 0.0
    if upper is not None and value > upper:
        return upper, 0.0
    return value, 1.0


class InequalityClamp:
    """Bound an evaluable between f_lo(x) and f_hi(x) pointwise.

    The output never leaves the band; the derivative follows the active
    bound when clamped and the inner evaluable otherwise (Heaviside pieces
    differentiate to zero).
    """

    def __init__(self, inner, f_lo, f_hi, var_names=("x",)):
        self.inner = inner
        self.f_lo = _as_expr(f_lo) if not callable(f_lo) else f_lo
        self.f_hi = _as_expr(f_hi) if not callable(f_hi) else f_hi
        self.var_names = tuple(var_names)

    def _bound(self, f, pts, orders):
        if callable(f):
            return np.asarray(f(pts, orders), dtype=float)
        e = f
        for name, d in zip(self.var_names, orders):
            if d:
                e = exprfn.differentiate(e, name, d)
        bindings = {name: pts[:, j] for j, name in enumerate(self.var_names)}
        return np.broadcast_to(np.asarray(exprfn.evaluate(e, bindings),
                                          dtype=float), (pts.shape[0],))

    def eval(self, pts, orders=None):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        orders = tuple(orders or (0,) * len(self.var_names))
        zero = (0,) * len(self.var_names)
        lo = self._bound(self.f_lo, pts, zero)
        hi = self._bound(self.f_hi, pts, zero)
        if np.any(lo > hi):
            raise ValueError("inconsistent clamp bounds: f_lo > f_hi")
        inner0 = np.asarray(self.inner.eval(pts, zero), dtype=float)
        below = inner0 < lo
        above = inner0 > hi
        if any(orders):
            out = np.asarray(self.inner.eval(pts, orders), dtype=float).copy()
            if below.any():
                out[below] = self._bound(self.f_lo, pts, orders)[below]
            if above.any():
                out[above] = self._bound(self.f_hi, pts, orders)[above]
            return out
        return np.where(below, lo, np.where(above, hi, inner0))


# ---------------------------------------------------------------------------
# solving and reporting

@dataclass
class SolveReport:
    problem: str
    xi: dict
    extras: dict
    max_residual: float
    mean_residual: float
    max_error: float = None
    mean_error: float = None
    iterations: int = 0
    reason: str = "linear"
    wall_seconds: float = 0.0
    seed: int = None
    columns: int = 0
    training_points: int = 0

    @property
    def converged(self):
        return self.reason in ("linear", "residual-inf-norm", "step-inf-norm")


def _test_errors(bld, xi, extras, analytic):
    pts = bld.test_grid()
    if pts is None or not analytic:
        return None, None
    errs = []
    bindings = bld.base_bindings(pts, extras)
    for dep, expr in analytic.items():
        truth = np.broadcast_to(
            np.asarray(exprfn.evaluate(_as_expr(expr), bindings), dtype=float),
            (pts.shape[0],))
        pred = bld.evaluate_solution(dep, pts, xi, extras)
        errs.append(np.abs(pred - truth))
    err = np.concatenate(errs)
    return float(err.max()), float(err.mean())


def solve(problem: DeProblem, seed=None) -> SolveReport:
    """Dispatch linear vs nonlinear assembly, solve, and report metrics."""
    t0 = time.perf_counter()
    bld = ProblemBuild(problem)
    pts = bld.grid()
    linear = bld.is_affine() and not problem.extras and not problem.force_nonlinear
    if linear:
        A, b = assemble_linear(bld, pts)
        xi = lstsq(A, b, method=problem.method)
        resid = A @ xi - b
        iterations, reason = 0, "linear"
        extras_used = {}
        q = xi
    else:
        residual, jacobian = assemble_nonlinear(bld, pts)
        x0 = np.zeros(bld.layout.width + len(problem.extras))
        for i, e in enumerate(problem.extras):
            x0[bld.layout.width + i] = e.init
        cfg = NllsConfig(tol=problem.nlls_tol, max_iter=problem.nlls_max_iter,
                         method=problem.method)
        result: NllsResult = nlls(residual, jacobian, x0, cfg)
        q = result.xi
        xi = q[:bld.layout.width]
        raw = {e.name: q[bld.layout.width + i]
               for i, e in enumerate(problem.extras)}
        extras_used, _ = bld.clamp_extras(raw)
        resid = residual(q)
        iterations, reason = result.iterations, result.reason
    max_err, mean_err = _test_errors(bld, xi, extras_used, problem.analytic)
    xi_by_dep = {d.name: xi[bld.layout.slice_of(d.name)]
                 for d in problem.dependent}
    return SolveReport(
        problem=problem.name,
        xi=xi_by_dep,
        extras=extras_used,
        max_residual=float(np.abs(resid).max()),
        mean_residual=float(np.abs(resid).mean()),
        max_error=max_err,
        mean_error=mean_err,
        iterations=iterations,
        reason=reason,
        wall_seconds=time.perf_counter() - t0,
        seed=seed,
        columns=bld.layout.width,
        training_points=pts.shape[0],
    )


# ---------------------------------------------------------------------------
# domain splitting (1-D, C^1 continuity at a solved-for split point)

@dataclass(frozen=True)
class SplitSpec:
    xp_init: float
    xp_lower: float
    xp_upper: float
    yp_init: float = 0.0
    dyp_init: float = 0.0


def solve_split(problem: DeProblem, split: SplitSpec, seed=None) -> SolveReport:
    """Solve a 1-D problem on two subdomains joined at an unknown split point.

    The original problem must have a single independent variable, one
    dependent variable with exactly the two endpoint value constraints, and
    residuals over that variable.  Both sub-expressions are written on the
    basis domain z in [-1, 1]; the split point enters as a clamped extra and
    the C^1 continuity unknowns (value and slope at the split) are solved
    jointly by Gauss-Newton.
    """
    (iv,) = problem.independent
    (dep,) = problem.dependent
    x0, xf = iv.interval
    ends = {}
    for c in dep.constraints:
        (term,) = c.terms
        ends[float(term["at"])] = float(c.value)
    if set(ends) != {x0, xf}:
        raise ValueError("split solve expects endpoint value constraints only")

    # map x in [x0, xp] -> z in [-1, 1] (sub 1) and [xp, xf] -> z (sub 2);
    # slopes: c1 = 2/(xp - x0), c2 = 2/(xf - xp)
    c1 = f"(2/(xp - {x0!r}))"
    c2 = f"(2/({xf!r} - xp))"

    def transform(r_expr, dep_name, c_expr):
        e = _as_expr(r_expr)
        for tag in sorted(exprfn.free_variables(e)):
            base, orders = exprfn.split_partial_tag(tag)
            if base != dep.name:
                continue
            d = orders.get(iv.name, 0)
            new_tag = dep_name if d == 0 else dep_name + "_" + "z" * d
            repl = exprfn.parse(f"{c_expr}^{d}*{new_tag}") if d else \
                exprfn.parse(new_tag)
            e = exprfn.substitute(e, tag, repl)
        # explicit x dependence: x = midpoint formula of the subdomain
        if iv.name in exprfn.free_variables(e):
            if dep_name.endswith("1"):
                xmap = exprfn.parse(f"{x0!r} + (xp - {x0!r})*(z + 1)/2")
            else:
                xmap = exprfn.parse(f"xp + ({xf!r} - xp)*(z + 1)/2")
            e = exprfn.substitute(e, iv.name, xmap)
        return e

    name1, name2 = dep.name + "1", dep.name + "2"
    residuals = []
    for r in problem.residuals:
        residuals.append(transform(r, name1, c1))
        residuals.append(transform(r, name2, c2))

    sub_problem = DeProblem(
        name=problem.name + "-split",
        independent=(IndependentVar("z", (-1.0, 1.0), iv.points, iv.spacing),),
        dependent=(
            DependentVar(name1, (
                ConstraintSpec("z", ({"order": 0, "at": -1.0},), ends[x0]),
                ConstraintSpec("z", ({"order": 0, "at": 1.0},), "yp"),
                ConstraintSpec("z", ({"order": 1, "at": 1.0},),
                               f"dyp*(xp - {x0!r})/2"),
            ), dep.basis),
            DependentVar(name2, (
                ConstraintSpec("z", ({"order": 0, "at": -1.0},), "yp"),
                ConstraintSpec("z", ({"order": 1, "at": -1.0},),
                               f"dyp*({xf!r} - xp)/2"),
                ConstraintSpec("z", ({"order": 0, "at": 1.0},), ends[xf]),
            ), dep.basis),
        ),
        residuals=tuple(residuals),
        params=problem.params,
        extras=(
            ExtraUnknown("xp", split.xp_init, split.xp_lower, split.xp_upper),
            ExtraUnknown("yp", split.yp_init),
            ExtraUnknown("dyp", split.dyp_init),
        ),
        # clamped extras can gate whole Jacobian columns to zero, so the
        # iteration needs a rank-tolerant least-squares route
        method="lstsq-cutoff",
        nlls_tol=problem.nlls_tol,
        nlls_max_iter=problem.nlls_max_iter,
    )

    t0 = time.perf_counter()
    report = solve(sub_problem, seed=seed)
    xp = report.extras["xp"]

    if problem.analytic and problem.test_points:
        bld = ProblemBuild(sub_problem)
        xi_full = np.concatenate([report.xi[name1], report.xi[name2]])
        (count,) = problem.test_points
        errs = []
        truth_expr = _as_expr(problem.analytic[dep.name])
        for nm, lo, hi in ((name1, x0, xp), (name2, xp, xf)):
            xs = np.linspace(lo, hi, count)
            z = -1.0 + 2.0 * (xs - lo) / (hi - lo)
            pred = bld.evaluate_solution(nm, z[:, None], xi_full, report.extras)
            truth = exprfn.evaluate(truth_expr,
                                    {**problem.params, iv.name: xs})
            errs.append(np.abs(pred - np.asarray(truth)))
        err = np.concatenate(errs)
        report.max_error = float(err.max())
        report.mean_error = float(err.mean())
    report.problem = problem.name
    report.wall_seconds = time.perf_counter() - t0
    return report
