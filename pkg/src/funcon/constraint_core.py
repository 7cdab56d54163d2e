"""Univariate constrained expressions.

A constraint operator is a weighted sum of point-derivative evaluations and
definite integrals acting on one variable's slices.  Switching functions are
linear combinations of support functions (monomials by default) satisfying
the Kronecker property against the constraint operators, and the constrained
expression is

    y(x, g) = g(x) + sum_j phi_j(x) * (kappa_j - C_j[g]).

Everything here evaluates in an *affine-in-xi* representation: an evaluation
of a field at N points returns rows (N, width), an offset (N,), and the
offset's gradients with respect to named scalar extras, so that least-squares
assembly, nested composition, and component references all reduce to the same
bookkeeping.  Built expressions are immutable and evaluation is reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from funcon import exprfn
from funcon.exprfn import Expr

__all__ = [
    "PointDeriv",
    "DefiniteIntegral",
    "ConstraintOperator",
    "Constraint",
    "ConstKappa",
    "ExprKappa",
    "BranchKappa",
    "ComponentKappa",
    "MonomialSupports",
    "SingularSupportError",
    "UnivariateCE",
    "build_univariate_ce",
    "support_matrix",
    "solve_switching",
    "apply_operator",
    "projection_value",
    "evaluate_ce",
    "AffineEval",
    "UnknownLayout",
    "FeatureField",
    "ExprField",
    "CallableField",
    "CEField",
    "BoundEvaluable",
    "gauss_legendre",
    "ExprFunction1D",
]

_GL_CACHE: dict = {}


def gauss_legendre(a: float, b: float, n: int = 64):
    """Nodes and weights for n-point Gauss-Legendre quadrature on [a, b]."""
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    z, w = _GL_CACHE[n]
    half = 0.5 * (b - a)
    return a + half * (z + 1.0), half * w


class SingularSupportError(ValueError):
    """The support basis cannot interpolate the requested constraints."""

    def __init__(self, cond):
        self.cond = cond
        super().__init__(
            f"support matrix is singular or near-singular (cond estimate {cond:.3e}); "
            "supply a different support basis")


# ---------------------------------------------------------------------------
# evaluation specs and operators

@dataclass(frozen=True)
class PointDeriv:
    """coeff * d^order f / dx^order at x=location, optionally integrated over
    foreign dimensions ((dim index, lo, hi), ...) for multivariate integral
    constraints."""

    order: int
    location: float
    coeff: float = 1.0
    foreign: tuple = ()

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("derivative order must be >= 0")


@dataclass(frozen=True)
class DefiniteIntegral:
    """coeff * integral of f over [lower, upper] in the operator's own variable."""

    lower: float
    upper: float
    coeff: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError("integral bounds must be finite")


@dataclass(frozen=True)
class ConstraintOperator:
    """Linear functional: weighted sum of evaluation specs."""

    specs: tuple

    def __init__(self, specs):
        object.__setattr__(self, "specs", tuple(specs))

    def max_order(self):
        return max((s.order for s in self.specs if isinstance(s, PointDeriv)),
                   default=0)

    def foreign_dims(self):
        dims = set()
        for s in self.specs:
            if isinstance(s, PointDeriv):
                dims.update(j for j, _, _ in s.foreign)
        return dims


def apply_operator(op: ConstraintOperator, f) -> float:
    """Apply a constraint operator to a univariate evaluable.

    ``f`` must provide ``deriv(x, d)``; definite integrals use ``f.integral(a, b)``
    when available and 64-node Gauss-Legendre quadrature otherwise.  Foreign
    integrals just scale by the interval length since f has no other variables.
    """
    total = 0.0
    for s in op.specs:
        if isinstance(s, PointDeriv):
            val = s.coeff * f.deriv(s.location, s.order)
            for _, lo, hi in s.foreign:
                val *= hi - lo
            total += val
        else:
            if hasattr(f, "integral"):
                total += s.coeff * f.integral(s.lower, s.upper)
            else:
                x, w = gauss_legendre(s.lower, s.upper)
                total += s.coeff * float(np.dot(w, [f.deriv(t, 0) for t in x]))
    return total


# ---------------------------------------------------------------------------
# kappa variants

@dataclass(frozen=True)
class ConstKappa:
    value: float

    def eval(self, ctx, pts, orders, extras):
        n = pts.shape[0]
        if any(orders):
            return _zero(n, ctx.width)
        return AffineEval(np.zeros((n, ctx.width)),
                          np.full(n, float(self.value)), {})


@dataclass(frozen=True)
class ExprKappa:
    """kappa as an expression over the other independent variables, extras,
    and fixed parameters."""

    expr: Expr

    def eval(self, ctx, pts, orders, extras):
        n = pts.shape[0]
        e = self.expr
        for name, d in zip(ctx.var_names, orders):
            if d:
                e = exprfn.differentiate(e, name, d)
        bindings = dict(ctx.params)
        for j, name in enumerate(ctx.var_names):
            bindings[name] = pts[:, j]
        if extras:
            bindings.update(extras)
        off = np.broadcast_to(np.asarray(exprfn.evaluate(e, bindings), dtype=float),
                              (n,)).copy()
        grads = {}
        if extras:
            present = exprfn.free_variables(e)
            for name in extras:
                if name in present:
                    ge = exprfn.differentiate(e, name, 1)
                    grads[name] = np.broadcast_to(
                        np.asarray(exprfn.evaluate(ge, bindings), dtype=float),
                        (n,)).copy()
        return AffineEval(np.zeros((n, ctx.width)), off, grads)


@dataclass(frozen=True)
class BranchKappa:
    """Piecewise-smooth kappa: the first branch whose predicate accepts the
    current extras is used, with symbolic partials of that branch."""

    branches: tuple  # ((predicate(extras) -> bool, Expr), ...)

    def eval(self, ctx, pts, orders, extras):
        for pred, expr in self.branches:
            if pred(extras or {}):
                return ExprKappa(expr).eval(ctx, pts, orders, extras)
        raise ValueError("no kappa branch matched the current extras")


@dataclass(frozen=True)
class ComponentKappa:
    """kappa = base - sum coeff * (other variable's CE evaluated at fixed
    slices); refs are (coeff, field, {dim: (order, location)})."""

    base: object  # Expr or float
    refs: tuple

    def eval(self, ctx, pts, orders, extras):
        if isinstance(self.base, Expr):
            out = ExprKappa(self.base).eval(ctx, pts, orders, extras)
        else:
            out = ConstKappa(float(self.base)).eval(ctx, pts, orders, extras)
        for coeff, other, fixed in self.refs:
            if any(orders[j] for j in fixed):
                continue  # constant along fixed dims once sliced
            pts2 = pts.copy()
            orders2 = list(orders)
            for j, (d, loc) in fixed.items():
                pts2[:, j] = loc
                orders2[j] = d
            ref = other.eval(pts2, tuple(orders2), extras)
            out = _ae_add(out, _ae_scale(ref, -float(coeff)))
        return out


@dataclass(frozen=True)
class Constraint:
    """operator applied to the dependent variable equals kappa."""

    operator: ConstraintOperator
    kappa: object  # ConstKappa | ExprKappa | BranchKappa | ComponentKappa

    @staticmethod
    def point(value, location, order=0, coeff=1.0):
        """Convenience: coeff * y^(order)(location) = value."""
        return Constraint(ConstraintOperator([PointDeriv(order, location, coeff)]),
                          _as_kappa(value))


def as_kappa(value):
    """Coerce a float / Expr / kappa object into a kappa."""
    if isinstance(value, (ConstKappa, ExprKappa, BranchKappa, ComponentKappa)):
        return value
    if isinstance(value, Expr):
        return ExprKappa(value)
    return ConstKappa(float(value))


_as_kappa = as_kappa


# ---------------------------------------------------------------------------
# support functions (monomials with exact derivative/integral rules)

class MonomialSupports:
    """Support basis x^p for a tuple of powers; default 1, x, ..., x^(k-1)."""

    def __init__(self, powers):
        self.powers = tuple(int(p) for p in powers)
        if any(p < 0 for p in self.powers):
            raise ValueError("monomial powers must be non-negative")

    @staticmethod
    def default(k):
        return MonomialSupports(range(k))

    def __len__(self):
        return len(self.powers)

    def deriv(self, x, j, d):
        p = self.powers[j]
        if d > p:
            return np.zeros_like(np.asarray(x, dtype=float))
        coef = 1.0
        for i in range(d):
            coef *= p - i
        return coef * np.asarray(x, dtype=float) ** (p - d)

    def integral(self, j, a, b):
        p = self.powers[j]
        return (b ** (p + 1) - a ** (p + 1)) / (p + 1)

    def table(self, x, d):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.column_stack([self.deriv(x, j, d) for j in range(len(self))])


def _operator_row(op: ConstraintOperator, supports: MonomialSupports):
    row = np.zeros(len(supports))
    for j in range(len(supports)):
        total = 0.0
        for s in op.specs:
            if isinstance(s, PointDeriv):
                val = s.coeff * float(supports.deriv(s.location, j, s.order))
                for _, lo, hi in s.foreign:
                    val *= hi - lo
                total += val
            else:
                total += s.coeff * supports.integral(j, s.lower, s.upper)
        row[j] = total
    return row


def support_matrix(constraints, supports: MonomialSupports,
                   extra_conditions=()) -> np.ndarray:
    """S_ij = C_i[s_j]; extra integral-augmentation conditions are stacked as
    additional rows (each a plain definite integral over this dimension)."""
    rows = [_operator_row(c.operator, supports) for c in constraints]
    for lo, hi in extra_conditions:
        rows.append(np.array([supports.integral(j, lo, hi)
                              for j in range(len(supports))]))
    return np.vstack(rows)


_COND_LIMIT = 1e12


def solve_switching(S: np.ndarray, n_constraints=None) -> np.ndarray:
    """alpha solving S alpha = [I; 0]; raises SingularSupportError when the
    condition estimate exceeds 1e12."""
    S = np.asarray(S, dtype=float)
    if S.shape[0] != S.shape[1]:
        raise ValueError("stacked support matrix must be square")
    k = S.shape[0] if n_constraints is None else n_constraints
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise SingularSupportError(cond)
    rhs = np.zeros((S.shape[0], k))
    rhs[:k, :k] = np.eye(k)
    return np.linalg.solve(S, rhs)


@dataclass(frozen=True)
class UnivariateCE:
    """Constrained expression data for one dimension."""

    dim: int
    constraints: tuple
    supports: MonomialSupports
    alpha: np.ndarray = dc_field(repr=False, compare=False, default=None)
    extra_conditions: tuple = ()

    def switching(self, x, d=0) -> np.ndarray:
        """phi_j^(d)(x) for all j, shape (npoints, nconstraints)."""
        return self.supports.table(x, d) @ self.alpha

    def kronecker_defect(self) -> float:
        """max |C_i[phi_j] - delta_ij| over the native constraints."""
        S = support_matrix(self.constraints, self.supports)
        prod = S @ self.alpha
        return float(np.max(np.abs(prod - np.eye(len(self.constraints)))))


def build_univariate_ce(constraints, supports=None, dim=0,
                        extra_conditions=()) -> UnivariateCE:
    """Build switching coefficients for a set of constraints on one dimension.

    ``extra_conditions`` holds (lo, hi) intervals from other dimensions'
    integral constraints; each adds a zero-integral condition and requires one
    more support function.
    """
    constraints = tuple(constraints)
    n = len(constraints) + len(extra_conditions)
    if supports is None:
        supports = MonomialSupports.default(n)
    if len(supports) != n:
        raise ValueError(
            f"{n} support functions required (constraints + augmentation rows), "
            f"got {len(supports)}")
    S = support_matrix(constraints, supports, extra_conditions)
    alpha = solve_switching(S, n_constraints=len(constraints))
    return UnivariateCE(dim=dim, constraints=constraints, supports=supports,
                        alpha=alpha, extra_conditions=tuple(extra_conditions))


# ---------------------------------------------------------------------------
# affine field machinery

@dataclass
class AffineEval:
    """u = rows @ xi + offset, with d(offset)/d(extra) per named extra."""

    rows: np.ndarray
    offset: np.ndarray
    grads: dict

    def value(self, xi):
        if self.rows.shape[1] == 0:
            return self.offset.copy()
        return self.rows @ xi + self.offset


def _zero(n, width):
    return AffineEval(np.zeros((n, width)), np.zeros(n), {})


def _ae_add(a: AffineEval, b: AffineEval) -> AffineEval:
    grads = dict(a.grads)
    for k, v in b.grads.items():
        grads[k] = grads[k] + v if k in grads else v
    return AffineEval(a.rows + b.rows, a.offset + b.offset, grads)


def _ae_scale(a: AffineEval, s) -> AffineEval:
    s = np.asarray(s)
    mul = s[:, None] if s.ndim == 1 else s
    return AffineEval(a.rows * mul, a.offset * s,
                      {k: v * s for k, v in a.grads.items()})


@dataclass(frozen=True)
class UnknownLayout:
    """Column layout of the global coefficient vector."""

    names: tuple
    sizes: tuple

    @property
    def width(self):
        return int(sum(self.sizes))

    def slice_of(self, name):
        start = 0
        for n, s in zip(self.names, self.sizes):
            if n == name:
                return slice(start, start + s)
            start += s
        raise KeyError(name)


@dataclass(frozen=True)
class FieldContext:
    """Shared evaluation context: variable names, layout width, parameters."""

    var_names: tuple
    width: int
    params: dict = dc_field(default_factory=dict)


class Field:
    """Evaluable with mixed partial derivatives, affine in the coefficients."""

    def __init__(self, ctx: FieldContext):
        self.ctx = ctx

    @property
    def nvars(self):
        return len(self.ctx.var_names)

    @property
    def width(self):
        return self.ctx.width

    def eval(self, pts, orders, extras=None) -> AffineEval:
        raise NotImplementedError


class FeatureField(Field):
    """Free function g = h(x)^T xi occupying one slice of the layout."""

    def __init__(self, ctx, feature, col_slice):
        super().__init__(ctx)
        self.feature = feature
        self.col_slice = col_slice

    def eval(self, pts, orders, extras=None):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        rows = np.zeros((pts.shape[0], self.width))
        rows[:, self.col_slice] = self.feature.eval(pts, orders)
        return AffineEval(rows, np.zeros(pts.shape[0]), {})


class ExprField(Field):
    """Probe field from a symbolic expression (no coefficients)."""

    def __init__(self, expr: Expr, var_names, params=None, width=0):
        super().__init__(FieldContext(tuple(var_names), width, dict(params or {})))
        self.expr = expr

    def eval(self, pts, orders, extras=None):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        e = self.expr
        for name, d in zip(self.ctx.var_names, orders):
            if d:
                e = exprfn.differentiate(e, name, d)
        bindings = dict(self.ctx.params)
        for j, name in enumerate(self.ctx.var_names):
            bindings[name] = pts[:, j]
        if extras:
            bindings.update(extras)
        off = np.broadcast_to(np.asarray(exprfn.evaluate(e, bindings), dtype=float),
                              (pts.shape[0],)).copy()
        return AffineEval(np.zeros((pts.shape[0], self.width)), off, {})


class CallableField(Field):
    """Probe field from fn(pts, orders) -> values."""

    def __init__(self, fn, var_names, width=0):
        super().__init__(FieldContext(tuple(var_names), width, {}))
        self.fn = fn

    def eval(self, pts, orders, extras=None):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        off = np.asarray(self.fn(pts, orders), dtype=float).reshape(pts.shape[0])
        return AffineEval(np.zeros((pts.shape[0], self.width)), off, {})


def _apply_op_to_field(op: ConstraintOperator, inner: Field, pts, orders, k,
                       extras) -> AffineEval:
    """C^k_j applied to a multivariate field, with cross-derivative orders for
    the other dimensions carried through (the own-dimension order is set by
    each spec; the result is constant in x_k)."""
    n = pts.shape[0]
    out = _zero(n, inner.width)
    for s in op.specs:
        if isinstance(s, PointDeriv):
            if any(orders[j] for j, _, _ in s.foreign):
                continue  # integrated out: constant along foreign dims
            orders2 = list(orders)
            orders2[k] = s.order
            pts2 = pts.copy()
            pts2[:, k] = s.location
            contrib = _foreign_integrate(inner, pts2, tuple(orders2),
                                         list(s.foreign), extras)
            out = _ae_add(out, _ae_scale(contrib, s.coeff))
        else:
            if orders[k] != 0:
                raise AssertionError("integral spec evaluated with own-dim order")
            nodes, w = gauss_legendre(s.lower, s.upper)
            orders2 = list(orders)
            orders2[k] = 0
            acc = _zero(n, inner.width)
            for t, wt in zip(nodes, w):
                pts2 = pts.copy()
                pts2[:, k] = t
                acc = _ae_add(acc, _ae_scale(
                    inner.eval(pts2, tuple(orders2), extras), wt))
            out = _ae_add(out, _ae_scale(acc, s.coeff))
    return out


def _foreign_integrate(inner, pts, orders, foreign, extras) -> AffineEval:
    if not foreign:
        return inner.eval(pts, orders, extras)
    j, lo, hi = foreign[0]
    rest = foreign[1:]
    nodes, w = gauss_legendre(lo, hi)
    acc = _zero(pts.shape[0], inner.width)
    for t, wt in zip(nodes, w):
        pts2 = pts.copy()
        pts2[:, j] = t
        acc = _ae_add(acc, _ae_scale(
            _foreign_integrate(inner, pts2, orders, rest, extras), wt))
    return acc


class CEField(Field):
    """One univariate constrained expression applied around an inner field."""

    def __init__(self, inner: Field, ce: UnivariateCE):
        super().__init__(inner.ctx)
        self.inner = inner
        self.ce = ce

    def eval(self, pts, orders, extras=None):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        orders = tuple(orders)
        k = self.ce.dim
        out = self.inner.eval(pts, orders, extras)
        phi = self.ce.switching(pts[:, k], d=orders[k])
        cross = list(orders)
        cross[k] = 0
        cross = tuple(cross)
        for j, con in enumerate(self.ce.constraints):
            if not np.any(phi[:, j]):
                continue
            kap = con.kappa.eval(self.ctx, pts, cross, extras)
            cg = _apply_op_to_field(con.operator, self.inner, pts, cross, k, extras)
            rho = _ae_add(kap, _ae_scale(cg, -1.0))
            out = _ae_add(out, _ae_scale(rho, phi[:, j]))
        return out


class BoundEvaluable:
    """A field with its coefficients substituted: concrete u(x) evaluations."""

    def __init__(self, field_obj: Field, xi, extras=None):
        self.field = field_obj
        self.xi = np.asarray(xi, dtype=float)
        self.extras = dict(extras or {})

    def eval(self, pts, orders):
        return self.field.eval(pts, orders, self.extras).value(self.xi)


# ---------------------------------------------------------------------------
# univariate convenience layer (the 1-D API used by tests and the ODE path)

class ExprFunction1D:
    """Univariate evaluable-with-derivatives built from an expression."""

    def __init__(self, expr, var="x", params=None):
        if isinstance(expr, str):
            expr = exprfn.parse(expr)
        self.expr = expr
        self.var = var
        self.params = dict(params or {})
        self._dcache = {0: expr}

    def deriv(self, x, d):
        if d not in self._dcache:
            self._dcache[d] = exprfn.differentiate(self.expr, self.var, d)
        bindings = dict(self.params)
        bindings[self.var] = x
        return exprfn.evaluate(self._dcache[d], bindings)


def projection_value(c: Constraint, g) -> float:
    """rho = kappa - C[g] for a univariate probe; kappa must be constant here."""
    if not isinstance(c.kappa, ConstKappa):
        raise ValueError("projection_value expects a constant kappa; component "
                         "and expression kappas are evaluated through fields")
    return c.kappa.value - apply_operator(c.operator, g)


def evaluate_ce(ce: UnivariateCE, g, x, d=0):
    """y^(d)(x) for a univariate CE and probe free function g.

    ``g`` provides deriv(x, d) (and optionally integral(a, b)).  Returns a
    scalar for scalar x, an array otherwise.
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    phi = ce.switching(x_arr, d=d)
    rho = np.array([projection_value(c, g) for c in ce.constraints])
    out = np.asarray([g.deriv(t, d) for t in x_arr], dtype=float) + phi @ rho
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(out[0])
    return out
