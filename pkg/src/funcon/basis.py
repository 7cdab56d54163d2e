"""Free-function building blocks: orthogonal polynomial / Fourier families with
exact derivative recursions, ELM random-feature layers, CGL nodes, and linear
domain maps.

Families are immutable after construction and all evaluation is pure.  The
only RNG consumer is ELM hidden-layer initialization, confined to
construction time.  Collocation for every family defaults to CGL nodes
mapped linearly onto the problem interval (families with infinite native
domains require an explicit finite window from the caller).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "cgl_nodes",
    "uniform_nodes",
    "DomainMap",
    "BasisFamily",
    "ElmFamily",
    "elm_init",
    "eval_basis",
    "TensorFeature",
    "ElmFeature",
    "NATIVE_DOMAINS",
]

NATIVE_DOMAINS = {
    "chebyshev": (-1.0, 1.0),
    "legendre": (-1.0, 1.0),
    "fourier": (-math.pi, math.pi),
    "laguerre": (0.0, math.inf),
    "hermite-prob": (-math.inf, math.inf),
    "hermite-phys": (-math.inf, math.inf),
}


def cgl_nodes(n: int) -> np.ndarray:
    """Chebyshev-Gauss-Lobatto nodes z_j = -cos(j*pi/(n-1)) on [-1, 1]."""
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got {n}")
    j = np.arange(n)
    return -np.cos(j * np.pi / (n - 1))


def uniform_nodes(n: int) -> np.ndarray:
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got {n}")
    return np.linspace(-1.0, 1.0, n)


@dataclass(frozen=True)
class DomainMap:
    """Linear map between a problem interval [x0, xf] and a basis interval
    [z0, zf]; ``slope`` is dz/dx, the chain-rule constant for derivatives."""

    x0: float
    xf: float
    z0: float
    zf: float

    def __post_init__(self):
        if not self.xf > self.x0:
            raise ValueError("problem interval must have x0 < xf")
        if not self.zf > self.z0:
            raise ValueError("basis interval must have z0 < zf")

    @property
    def slope(self) -> float:
        return (self.zf - self.z0) / (self.xf - self.x0)

    def to_basis(self, x):
        return self.z0 + self.slope * (np.asarray(x, dtype=float) - self.x0)

    def to_problem(self, z):
        return self.x0 + (np.asarray(z, dtype=float) - self.z0) / self.slope

    @staticmethod
    def identity(z0=-1.0, zf=1.0):
        return DomainMap(z0, zf, z0, zf)


def _normalize_removal(nC, count):
    """Removal spec: -1 none, int k the first k, or an explicit index set."""
    if nC is None or (isinstance(nC, int) and nC == -1):
        return ()
    if isinstance(nC, int):
        if nC > count:
            raise ValueError(f"removal of {nC} exceeds {count} basis functions")
        return tuple(range(nC))
    idx = tuple(sorted(set(int(i) for i in nC)))
    if idx and (idx[0] < 0 or idx[-1] >= count):
        raise ValueError(f"removal indices {idx} out of range for {count} functions")
    return idx


# ---------------------------------------------------------------------------
# univariate recursions (native variable z); rows = points, cols = 0..m

def _recurrence_table(kind, z, m, d):
    """d-th z-derivative of basis functions 0..m at points z, shape (len(z), m+1).

    Polynomial families use their three-term recursions, carried along for
    every derivative order up to d simultaneously.
    """
    z = np.asarray(z, dtype=float)
    npts = z.shape[0]
    if kind == "fourier":
        return _fourier_table(z, m, d)
    # tab[q] holds the q-th derivative table while recursing
    tab = np.zeros((d + 1, npts, m + 1))
    tab[0, :, 0] = 1.0
    if m >= 1:
        if kind == "chebyshev":
            tab[0, :, 1] = z
            if d >= 1:
                tab[1, :, 1] = 1.0
        elif kind == "legendre":
            tab[0, :, 1] = z
            if d >= 1:
                tab[1, :, 1] = 1.0
        elif kind == "laguerre":
            tab[0, :, 1] = 1.0 - z
            if d >= 1:
                tab[1, :, 1] = -1.0
        elif kind == "hermite-prob":
            tab[0, :, 1] = z
            if d >= 1:
                tab[1, :, 1] = 1.0
        elif kind == "hermite-phys":
            tab[0, :, 1] = 2.0 * z
            if d >= 1:
                tab[1, :, 1] = 2.0
        else:
            raise ValueError(f"unknown basis family {kind!r}")
    for k in range(1, m):
        for q in range(d, -1, -1):
            lower = tab[q - 1, :, k] if q >= 1 else 0.0
            if kind == "chebyshev":
                nxt = 2.0 * (q * lower + z * tab[q, :, k]) - tab[q, :, k - 1]
            elif kind == "legendre":
                a = (2.0 * k + 1.0) / (k + 1.0)
                b = k / (k + 1.0)
                nxt = a * (q * lower + z * tab[q, :, k]) - b * tab[q, :, k - 1]
            elif kind == "laguerre":
                a = 1.0 / (k + 1.0)
                nxt = ((2.0 * k + 1.0 - z) * tab[q, :, k] - q * lower) * a \
                    - (k * a) * tab[q, :, k - 1]
            elif kind == "hermite-prob":
                nxt = q * lower + z * tab[q, :, k] - k * tab[q, :, k - 1]
            else:  # hermite-phys
                nxt = 2.0 * q * lower + 2.0 * z * tab[q, :, k] \
                    - 2.0 * k * tab[q, :, k - 1]
            tab[q, :, k + 1] = nxt
    return tab[d]


def _fourier_table(z, m, d):
    # basis: 1, sin(z), cos(z), sin(2z), cos(2z), ...; d-th derivative by the
    # mod-4 phase shift of sin/cos
    npts = z.shape[0]
    out = np.zeros((npts, m + 1))
    if d == 0:
        out[:, 0] = 1.0
    for k in range(1, m + 1):
        f = math.ceil(k / 2)
        arg = f * z
        scale = float(f) ** d
        if k % 2 == 1:  # sin branch
            phase = [np.sin, np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t)][d % 4]
        else:  # cos branch
            phase = [np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t), np.sin][d % 4]
        out[:, k] = scale * phase(arg)
    return out


@dataclass(frozen=True)
class BasisFamily:
    """Univariate basis family with degree m (m+1 functions before removal)."""

    kind: str
    degree: int
    removal: tuple = ()

    def __post_init__(self):
        if self.kind not in NATIVE_DOMAINS:
            raise ValueError(f"unknown basis family {self.kind!r}")
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        object.__setattr__(
            self, "removal", _normalize_removal(self.removal, self.degree + 1))

    @property
    def native_domain(self):
        return NATIVE_DOMAINS[self.kind]

    def count(self, full=False):
        if full:
            return self.degree + 1
        return self.degree + 1 - len(self.removal)

    def table(self, z, d):
        """Native-variable derivative table, all columns (no removal)."""
        if d < 0:
            raise ValueError("derivative order must be >= 0")
        return _recurrence_table(self.kind, np.atleast_1d(z), self.degree, d)


def eval_basis(family: BasisFamily, domain_map: DomainMap, x, d: int,
               full: bool = False) -> np.ndarray:
    """Problem-variable derivative matrix H^(d), shape (npoints, retained).

    Columns follow basis index order with the removal spec applied unless
    ``full`` is set.  The chain-rule factor slope^d is included, so the
    entries are derivatives with respect to the problem variable.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo, hi = family.native_domain
    z = domain_map.to_basis(x)
    if math.isfinite(lo) and math.isfinite(hi):
        eps = 1e-12 * max(1.0, abs(hi - lo))
        if np.any(z < lo - eps) or np.any(z > hi + eps):
            raise ValueError("points map outside the basis native domain")
    mat = family.table(z, d) * domain_map.slope ** d
    if full or not family.removal:
        return mat
    keep = [j for j in range(family.degree + 1) if j not in set(family.removal)]
    return mat[:, keep]


# ---------------------------------------------------------------------------
# ELM random features

_ELM_ACTIVATIONS = ("sin", "tanh", "sigmoid", "swish", "relu")


def elm_init(seed: int, neurons: int, in_dim: int, lo: float, hi: float):
    """Draw hidden weights (neurons, in_dim) and biases (neurons,) i.i.d.
    uniform on [lo, hi); deterministic for a given seed."""
    if not lo < hi:
        raise ValueError(f"invalid range ({lo}, {hi})")
    rng = np.random.default_rng(seed)
    w = rng.uniform(lo, hi, size=(neurons, in_dim))
    b = rng.uniform(lo, hi, size=neurons)
    return w, b


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _activation_deriv(name, x, d):
    """d-th derivative of the activation, d <= 4 (relu uses the all-zero
    convention beyond first order)."""
    if name == "sin":
        return [np.sin, np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t)][d % 4](x)
    if name == "tanh":
        t = np.tanh(x)
        s = 1.0 - t * t  # sech^2
        if d == 0:
            return t
        if d == 1:
            return s
        if d == 2:
            return -2.0 * t * s
        if d == 3:
            return s * (4.0 * t * t - 2.0 * s)
        if d == 4:
            return t * s * (16.0 * s - 8.0 * t * t)
        raise ValueError("tanh derivatives implemented up to order 4")
    if name == "sigmoid":
        s = _sigmoid(x)
        if d == 0:
            return s
        if d == 1:
            return s * (1 - s)
        if d == 2:
            return s * (1 - s) * (1 - 2 * s)
        if d == 3:
            return s * (1 - s) * (1 - 6 * s + 6 * s * s)
        if d == 4:
            return s * (1 - s) * (1 - 2 * s) * (1 - 12 * s + 12 * s * s)
        raise ValueError("sigmoid derivatives implemented up to order 4")
    if name == "swish":
        s = _sigmoid(x)
        if d == 0:
            return x * s
        # d^n(x*s) = x*s^(n) + n*s^(n-1)
        return x * _activation_deriv("sigmoid", x, d) \
            + d * _activation_deriv("sigmoid", x, d - 1)
    if name == "relu":
        if d == 0:
            return np.maximum(x, 0.0)
        if d == 1:
            return (x > 0).astype(float)
        return np.zeros_like(x)
    raise ValueError(f"unknown ELM activation {name!r}")


@dataclass(frozen=True)
class ElmFamily:
    """Single hidden layer with fixed random weights; linear in the output
    coefficients.  Hidden parameters are frozen after construction."""

    activation: str
    neurons: int
    in_dim: int
    seed: int
    lo: float = -1.0
    hi: float = 1.0
    weights: np.ndarray = field(default=None, compare=False, repr=False)
    biases: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.activation not in _ELM_ACTIVATIONS:
            raise ValueError(f"unknown ELM activation {self.activation!r}")
        w, b = elm_init(self.seed, self.neurons, self.in_dim, self.lo, self.hi)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    def count(self):
        return self.neurons


# ---------------------------------------------------------------------------
# multivariate feature maps: rows of the free function g = h(x)^T xi

class TensorFeature:
    """Tensor product of univariate families with per-dimension maps.

    Retained multi-indices obey per-dimension caps, an optional total-degree
    cap, and the removal rule: an index tuple is dropped only when every
    coordinate lies in that dimension's removal set (one support function
    per dimension, the multivariate null-space rule).
    """

    def __init__(self, families, maps, total_degree=None):
        if len(families) != len(maps):
            raise ValueError("one DomainMap per family required")
        self.families = tuple(families)
        self.maps = tuple(maps)
        self.total_degree = total_degree
        self.indices = self._build_indices()

    def _build_indices(self):
        dims = len(self.families)
        caps = [f.degree for f in self.families]
        removed = [set(f.removal) for f in self.families]
        out = []

        def rec(prefix, remaining_dims, budget):
            if not remaining_dims:
                idx = tuple(prefix)
                if not all(idx[k] in removed[k] for k in range(dims)):
                    out.append(idx)
                return
            k = dims - remaining_dims
            top = caps[k] if budget is None else min(caps[k], budget)
            for i in range(top + 1):
                rec(prefix + [i], remaining_dims - 1,
                    None if budget is None else budget - i)

        rec([], dims, self.total_degree)
        out.sort()
        return tuple(out)

    @property
    def count(self):
        return len(self.indices)

    @property
    def nvars(self):
        return len(self.families)

    def eval(self, pts: np.ndarray, orders) -> np.ndarray:
        """Mixed-partial feature matrix, shape (npoints, count)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        idx = np.asarray(self.indices, dtype=int)
        cols = np.ones((pts.shape[0], len(self.indices)))
        for k, (fam, dmap) in enumerate(zip(self.families, self.maps)):
            table = eval_basis(fam, dmap, pts[:, k], orders[k], full=True)
            cols *= table[:, idx[:, k]]
        return cols


class ElmFeature:
    """Joint random-feature map h_j(x) = act(w_j . z(x) + b_j)."""

    def __init__(self, family: ElmFamily, maps):
        if len(maps) != family.in_dim:
            raise ValueError("one DomainMap per input dimension required")
        self.family = family
        self.maps = tuple(maps)

    @property
    def count(self):
        return self.family.neurons

    @property
    def nvars(self):
        return self.family.in_dim

    def eval(self, pts: np.ndarray, orders) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        z = np.column_stack([m.to_basis(pts[:, k]) for k, m in enumerate(self.maps)])
        arg = z @ self.family.weights.T + self.family.biases
        total = int(sum(orders))
        vals = _activation_deriv(self.family.activation, arg, total)
        scale = np.ones(self.family.neurons)
        for k, d in enumerate(orders):
            if d:
                scale = scale * (self.family.weights[:, k] * self.maps[k].slope) ** d
        return vals * scale
