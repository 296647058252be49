"""Volume-constrained nonlocal solves and local reference solutions.

The nonlocal problem is the minimization of

    J(u) = (1/p) E(u) - (f, u)

over nodal fields vanishing on the collar, where ``E`` is the discrete
energy over the whole grid.  For ``p = 2`` the optimality system is a sparse
symmetric positive definite linear system solved by conjugate gradients;
otherwise plain gradient descent with Armijo backtracking is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, spsolve

from ._quadrature import gauss_legendre
from .domain import Grid, shifted_slices
from .energy import (DEFAULT_SCHEME, QuadratureScheme, ScalarField, _pair_weight, _weights, load,
                     nonlocal_form, objective_and_gradient, pair_stencil)
from .kernel import Kernel

METHODS = ("auto", "direct_p2", "descent")


class SolverError(RuntimeError):
    """Raised when a solve does not reach its gradient tolerance."""

    def __init__(self, message: str, final_grad_norm: float, iterations: int):
        super().__init__(f"{message} (final gradient norm {final_grad_norm:.3e} after {iterations} iterations)")
        self.final_grad_norm = final_grad_norm
        self.iterations = iterations


@dataclass(frozen=True)
class SolveOptions:
    """Solver controls.  ``tol_grad`` is the max-norm of the nodal gradient;
    ``None`` selects 1e-8 for ``p = 2`` and 1e-6 otherwise."""

    method: str = "auto"
    tol_grad: float | None = None
    max_iter: int = 100_000
    shrink: float = 0.5
    slope: float = 1e-4
    cg_rtol: float = 1e-12
    residual_samples: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.tol_grad is not None and not self.tol_grad > 0:
            raise ValueError("tol_grad must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0 < self.shrink < 1 or not 0 < self.slope < 1:
            raise ValueError("backtracking needs 0 < shrink < 1 and 0 < slope < 1")

    def tolerance(self, p: float) -> float:
        if self.tol_grad is not None:
            return self.tol_grad
        return 1e-8 if p == 2 else 1e-6


@dataclass(frozen=True, eq=False)
class SolveResult:
    u: ScalarField
    iterations: int
    final_grad_norm: float
    objective: float
    converged: bool
    method: str
    history: tuple[float, ...] = field(default=(), repr=False)
    max_residual: float = 0.0


def stiffness_matrix(grid: Grid, h, kernel: Kernel, scheme: QuadratureScheme = DEFAULT_SCHEME) -> sp.csr_matrix:
    """Hessian of ``E/2`` for ``p = 2`` over all grid nodes.

    It is the weighted graph Laplacian with edge weights ``2 w_i w_j H k/r^2``.
    """
    offsets, factors = pair_stencil(grid, kernel, scheme)
    wt = _weights(grid, "omega_delta")
    hv, combine = _pair_weight(grid, h)
    index = np.arange(grid.size).reshape(grid.shape)
    rows, cols, vals = [], [], []
    for o, fac in zip(offsets, factors):
        sa, sb = shifted_slices(grid.shape, o)
        c = (2.0 * wt[sa] * wt[sb] * combine(hv[sa], hv[sb]) * fac).ravel()
        rows.append(index[sa].ravel())
        cols.append(index[sb].ravel())
        vals.append(c)
    if not rows:
        return sp.csr_matrix((grid.size, grid.size))
    i, j, c = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    off = sp.coo_matrix((c, (i, j)), shape=(grid.size, grid.size)).tocsr()
    off = off + off.T
    diag = np.asarray(off.sum(axis=1)).ravel()
    return (sp.diags(diag) - off).tocsr()


def solve_nonlocal(f: ScalarField, h, kernel: Kernel, grid: Grid | None = None,
                   opts: SolveOptions | None = None, u0: ScalarField | None = None,
                   scheme: QuadratureScheme = DEFAULT_SCHEME) -> SolveResult:
    """Minimize ``J`` over fields vanishing on the collar.

    Raises :class:`SolverError` when the gradient tolerance is not reached.
    """
    opts = opts or SolveOptions()
    grid = grid or f.grid
    if f.grid is not grid:
        raise ValueError("load lives on a different grid")
    p = float(kernel.p)
    if not p > 1:
        raise ValueError(f"exponent p must exceed 1, got {p}")
    tol = opts.tolerance(p)
    method = opts.method
    if method == "auto":
        method = "direct_p2" if p == 2 else "descent"
    if method == "direct_p2" and p != 2:
        raise ValueError("direct_p2 requires p = 2")
    start = u0 if u0 is not None else ScalarField.zeros(grid)
    if start.grid is not grid or np.any(start.values[grid.collar] != 0):
        raise ValueError("initial guess must live on the grid and vanish on the collar")
    start = ScalarField(grid, start.values, grid.collar)

    if method == "direct_p2":
        result = _solve_linear(f, h, kernel, scheme, start, tol, opts)
    else:
        result = _descent(f, h, kernel, scheme, start, tol, opts)
    if not result.converged:
        raise SolverError(f"{method} did not converge", result.final_grad_norm, result.iterations)
    residual = _residual_check(result.u, f, h, kernel, scheme, opts)
    return SolveResult(result.u, result.iterations, result.final_grad_norm, result.objective, True,
                       method, result.history, residual)


def _solve_linear(f, h, kernel, scheme, start, tol, opts) -> SolveResult:
    grid = start.grid
    free = grid.interior
    A = stiffness_matrix(grid, h, kernel, scheme)[free][:, free]
    b = (grid.trapezoid_weights("omega") * f.values)[free]
    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    if np.any(b != 0) or np.any(start.values[free] != 0):
        x, info = cg(A, b, x0=start.values[free], rtol=opts.cg_rtol, atol=0.0,
                     maxiter=opts.max_iter, callback=count)
    else:
        x, info = np.zeros(int(free.sum())), 0
    u = ScalarField.from_free(grid, x)
    value, grad = objective_and_gradient(u, f, h, kernel, scheme)
    gnorm = float(np.max(np.abs(grad[free]), initial=0.0))
    return SolveResult(u, iterations, gnorm, value, gnorm <= tol, "direct_p2", (value,))


def _descent(f, h, kernel, scheme, start, tol, opts) -> SolveResult:
    grid = start.grid
    free = grid.interior
    u = start
    value, grad = objective_and_gradient(u, f, h, kernel, scheme)
    grad = np.where(free, grad, 0.0)
    history = [value]
    step = 1.0
    it = 0
    gnorm = float(np.max(np.abs(grad)))
    while gnorm > tol and it < opts.max_iter:
        g2 = float(grad @ grad)
        # try a longer step than the last accepted one, then backtrack
        t = 2.0 * step
        while True:
            trial = u.with_values(u.values - t * grad)
            trial_value, trial_grad = objective_and_gradient(trial, f, h, kernel, scheme)
            if trial_value <= value - opts.slope * t * g2:
                break
            t *= opts.shrink
            if t * gnorm <= 1e-15 * max(1.0, float(np.max(np.abs(u.values)))):
                # the trial point no longer differs from u in floating point
                return SolveResult(u, it, gnorm, value, gnorm <= tol, "descent", tuple(history))
        if trial_value > value:
            raise AssertionError("objective increased during descent")
        u, value, step = trial, trial_value, t
        grad = np.where(free, trial_grad, 0.0)
        gnorm = float(np.max(np.abs(grad)))
        history.append(value)
        it += 1
    return SolveResult(u, it, gnorm, value, gnorm <= tol, "descent", tuple(history))


def _residual_check(u, f, h, kernel, scheme, opts) -> float:
    """Largest ratio ``|B(u, w) - (f, w)| / (10 tol ||w||_1)`` over random test fields."""
    grid = u.grid
    rng = np.random.default_rng(opts.seed)
    tol = opts.tolerance(kernel.p)
    worst = 0.0
    for _ in range(opts.residual_samples):
        w = ScalarField.from_free(grid, rng.standard_normal(int(grid.interior.sum())))
        r = abs(nonlocal_form(u, w, h, kernel, scheme) - load(f, w))
        bound = 10.0 * tol * float(np.abs(w.values).sum())
        worst = max(worst, r / bound)
    if worst > 1.0:
        raise SolverError("variational residual check failed", worst, 0)
    return worst


# ---------------------------------------------------------------------------
# local reference problems


def _phi(s: np.ndarray, p: float) -> np.ndarray:
    """Inverse of ``t -> |t|^(p-2) t``."""
    return s if p == 2 else np.sign(s) * np.abs(s) ** (1.0 / (p - 1.0))


def solve_local(f: ScalarField, h, grid: Grid | None = None, p: float = 2.0,
                order: int = 8, shoot_tol: float = 1e-10) -> ScalarField:
    """Solve ``-div(h |grad u|^(p-2) grad u) = f`` in the box, ``u = 0`` on its boundary.

    In 1D the first integral ``h |u'|^(p-2) u' = c - F`` is integrated cell by
    cell with Gauss-Legendre and ``c`` is found by bisection.  In 2D only
    ``p = 2`` is supported (five-point differences, edge-averaged ``h``).
    ``f`` is linearly interpolated between nodes.  The returned field vanishes
    on the collar, including the faces of the box.
    """
    grid = grid or f.grid
    if not p > 1:
        raise ValueError(f"exponent p must exceed 1, got {p}")
    if grid.dim == 1:
        return _shoot_1d(f, h, grid, float(p), order, shoot_tol)
    if p != 2:
        raise ValueError("2D local solves are only available for p = 2")
    return _five_point(f, h, grid)


def _shoot_1d(f, h, grid, p, order, shoot_tol) -> ScalarField:
    sub = grid.omega_slices[0]
    x = grid.axes[0][sub]
    fv = np.asarray(f.values)[sub]
    dx = np.diff(x)
    gx, gw = gauss_legendre(order)
    t = 0.5 * (gx + 1.0)
    # F is piecewise quadratic: exact integral of the linear interpolant of f
    F_nodes = np.concatenate([[0.0], np.cumsum(0.5 * dx * (fv[:-1] + fv[1:]))])
    slope = (fv[1:] - fv[:-1]) / dx
    s = dx[:, None] * t[None]
    F_q = F_nodes[:-1, None] + fv[:-1, None] * s + 0.5 * slope[:, None] * s * s
    xq = x[:-1, None] + s
    hq = np.asarray(h.eval_h(xq), dtype=float).reshape(xq.shape)
    if np.any(hq <= 0):
        raise ValueError("coefficient must be positive inside the box")
    wq = 0.5 * dx[:, None] * gw[None]

    def profile(c):
        return np.concatenate([[0.0], np.cumsum((wq * _phi((c - F_q) / hq, p)).sum(axis=1))])

    lo, hi = float(F_q.min()), float(F_q.max())
    u = profile(lo)
    if hi > lo:
        for _ in range(200):
            c = 0.5 * (lo + hi)
            u = profile(c)
            if abs(u[-1]) <= shoot_tol:
                break
            if u[-1] > 0:
                hi = c
            else:
                lo = c
    vals = np.zeros(grid.size)
    vals[sub] = u
    vals[grid.collar] = 0.0
    return ScalarField(grid, vals, grid.collar)


def _five_point(f, h, grid) -> ScalarField:
    sub = grid.omega_slices
    hv = grid.reshape(h.nodal(grid))[sub]
    fv = grid.reshape(f.values)[sub]
    shape = hv.shape
    inner = (slice(1, -1), slice(1, -1))
    idx = -np.ones(shape, dtype=int)
    idx[inner] = np.arange((shape[0] - 2) * (shape[1] - 2)).reshape(shape[0] - 2, shape[1] - 2)
    size = int(idx.max()) + 1
    rows, cols, vals = [], [], []
    diag = np.zeros(size)
    for axis, step in ((0, grid.spacing[0]), (1, grid.spacing[1])):
        for shift in (-1, 1):
            nb = np.roll(idx, -shift, axis=axis)
            hn = np.roll(hv, -shift, axis=axis)
            edge = 0.5 * (hv + hn)[inner] / step**2
            me, other = idx[inner], nb[inner]
            np.add.at(diag, me.ravel(), edge.ravel())
            keep = other >= 0
            rows.append(me[keep])
            cols.append(other[keep])
            vals.append(-edge[keep])
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(size, size)).tocsr() + sp.diags(diag)
    sol = spsolve(A.tocsc(), fv[inner].ravel())
    out = np.zeros(shape)
    out[inner] = sol.reshape(shape[0] - 2, shape[1] - 2)
    vals_full = np.zeros(grid.shape)
    vals_full[sub] = out
    return ScalarField(grid, vals_full.ravel(), grid.collar)


def l_p_error(u: ScalarField, v: ScalarField, p: float = 2.0) -> float:
    """Trapezoid ``L^p`` distance over the closed box."""
    w = u.grid.trapezoid_weights("omega")
    return math.fsum(w * np.abs(u.values - v.values) ** p) ** (1.0 / p)
