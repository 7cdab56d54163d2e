"""Linear least-squares variants and the Gauss-Newton iterative solver.

The iterative loop is plain Gauss-Newton: solve J dxi = -L each step, no
damping or line search; divergence control (e.g. clamped unknowns) is the
caller's job.  Stopping conditions, in order: residual infinity norm below
tol, step infinity norm below tol, iteration count past max_iter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

__all__ = [
    "LSQ_METHODS",
    "RankDeficientError",
    "lstsq",
    "NllsConfig",
    "NllsResult",
    "nlls",
]

LSQ_METHODS = ("normal", "qr", "scaled-qr", "svd-pinv", "cholesky", "lstsq-cutoff")


class RankDeficientError(np.linalg.LinAlgError):
    pass


def _qr_solve(A, b):
    q, r = np.linalg.qr(A)
    d = np.abs(np.diag(r))
    if d.min() <= d.max() * np.finfo(float).eps * max(A.shape):
        raise RankDeficientError("rank-deficient matrix in QR path")
    return solve_triangular(r, q.T @ b)


def lstsq(A: np.ndarray, b: np.ndarray, method: str = "scaled-qr") -> np.ndarray:
    """Minimize ||A xi - b||_2.

    scaled-qr rescales columns by their inverse 2-norms before factorization
    and unscales the solution; lstsq-cutoff is the SVD route for
    ill-conditioned systems (singular values below max(s)*1e-14*max(shape)
    are dropped, min-norm solution), the right choice for ELM features.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if method in ("qr", "cholesky", "scaled-qr") and A.shape[0] < A.shape[1]:
        raise ValueError(f"{method} path needs rows >= cols, got {A.shape}")
    if method == "normal":
        return np.linalg.solve(A.T @ A, A.T @ b)
    if method == "qr":
        return _qr_solve(A, b)
    if method == "scaled-qr":
        norms = np.linalg.norm(A, axis=0)
        norms[norms == 0] = 1.0
        return _qr_solve(A / norms, b) / norms
    if method == "svd-pinv":
        return np.linalg.pinv(A) @ b
    if method == "cholesky":
        try:
            c = cho_factor(A.T @ A)
        except np.linalg.LinAlgError as err:
            raise RankDeficientError(str(err)) from err
        return cho_solve(c, A.T @ b)
    if method == "lstsq-cutoff":
        u, s, vt = np.linalg.svd(A, full_matrices=False)
        cutoff = s.max(initial=0.0) * 1e-14 * max(A.shape)
        inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
        return vt.T @ (inv * (u.T @ b))
    raise ValueError(f"unknown least-squares method {method!r}; "
                     f"options: {LSQ_METHODS}")


@dataclass
class NllsConfig:
    tol: float = 1e-13
    max_iter: int = 50
    method: str = "svd-pinv"
    update_hook: object = None  # xi -> xi, applied after each step
    stop_hook: object = None    # (iteration, L, dxi) -> bool, extra stop test
    debug_check_jacobian: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class NllsResult:
    xi: np.ndarray
    iterations: int
    reason: str  # residual-inf-norm | step-inf-norm | max-iterations | hook
    residual_history: list = field(default_factory=list)

    @property
    def converged(self):
        return self.reason in ("residual-inf-norm", "step-inf-norm")


def _fd_jacobian(residual, xi, h=1e-7):
    base = np.asarray(residual(xi), dtype=float)
    J = np.zeros((base.size, xi.size))
    for j in range(xi.size):
        step = h * max(1.0, abs(xi[j]))
        xp = xi.copy()
        xp[j] += step
        xm = xi.copy()
        xm[j] -= step
        J[:, j] = (np.asarray(residual(xp)) - np.asarray(residual(xm))) / (2 * step)
    return J


def nlls(residual, jacobian, xi0, config: NllsConfig = None) -> NllsResult:
    """Gauss-Newton iteration xi <- xi + dxi with J dxi = -L by least squares."""
    config = config or NllsConfig()
    xi = np.atleast_1d(np.asarray(xi0, dtype=float)).copy()
    if config.debug_check_jacobian:
        J0 = np.asarray(jacobian(xi), dtype=float)
        Jfd = _fd_jacobian(residual, xi)
        scale = max(1.0, np.abs(Jfd).max())
        if np.abs(J0 - Jfd).max() / scale > 1e-4:
            raise ValueError("jacobian inconsistent with residual "
                             f"(max relative deviation "
                             f"{np.abs(J0 - Jfd).max() / scale:.3e})")
    history = []
    it = 0
    dxi = None
    while True:
        L = np.atleast_1d(np.asarray(residual(xi), dtype=float))
        history.append(float(np.abs(L).max()))
        # stopping conditions, checked in order each pass
        if history[-1] < config.tol:
            return NllsResult(xi, it, "residual-inf-norm", history)
        if dxi is not None and np.abs(dxi).max() < config.tol:
            return NllsResult(xi, it, "step-inf-norm", history)
        if it >= config.max_iter:
            return NllsResult(xi, it, "max-iterations", history)
        J = np.atleast_2d(np.asarray(jacobian(xi), dtype=float))
        try:
            dxi = lstsq(J, -L, method=config.method)
        except (np.linalg.LinAlgError, ValueError) as err:
            raise RuntimeError(
                f"least-squares failed at iteration {it}: {err}") from err
        xi = xi + dxi
        if config.update_hook is not None:
            xi = np.asarray(config.update_hook(xi), dtype=float)
        it += 1
        if config.stop_hook is not None and config.stop_hook(it, L, dxi):
            return NllsResult(xi, it, "hook", history)
