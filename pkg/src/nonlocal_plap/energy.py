"""Discrete nonlocal p-energy, its variational form and gradient, local energy.

The double integral over pairs is evaluated offset by offset: for every
lattice offset ``o`` inside the horizon the contributions of all node pairs
``(x, x + o*spacing)`` are computed at once on shifted array views.  This is
the band structure of the pair list without ever materializing it.  Per
offset partial sums are combined with :func:`math.fsum`, so results do not
depend on summation order and reruns are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._quadrature import adaptive_gauss_legendre, composite_nodes
from .coefficient import Coefficient
from .domain import HORIZON_RTOL, Grid, shifted_slices, stencil
from .kernel import Kernel

RULES = ("node_midpoint", "cell_average")


@dataclass(frozen=True)
class QuadratureScheme:
    """How pair interactions are weighted.

    ``node_midpoint`` evaluates the kernel at the node distance and keeps
    pairs strictly inside the horizon.  ``cell_average`` replaces the kernel
    value by its average over the neighbour's grid cell, which also picks up
    cells cut by the horizon sphere.  Self-pairs are always skipped.
    """

    rule: str = "node_midpoint"
    diagonal_policy: str = "skip"

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.diagonal_policy != "skip":
            raise ValueError("only the 'skip' diagonal policy is supported")


DEFAULT_SCHEME = QuadratureScheme()


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nodal values on a grid; ``constrained`` nodes must hold zero."""

    grid: Grid
    values: np.ndarray
    constrained: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        constrained = np.broadcast_to(np.asarray(self.constrained, dtype=bool), (self.grid.size,)).copy()
        if values.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} values, got shape {values.shape}")
        if np.any(values[constrained] != 0):
            raise ValueError("constrained nodes must carry zero values")
        values.setflags(write=False)
        constrained.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "constrained", constrained)

    @classmethod
    def from_function(cls, grid: Grid, fn, constrained: bool = True) -> "ScalarField":
        """Sample ``fn(points)``; with ``constrained`` the collar is zeroed."""
        vals = np.broadcast_to(np.asarray(fn(grid.nodes), dtype=float), (grid.size,))
        mask = grid.collar if constrained else np.zeros(grid.size, dtype=bool)
        return cls(grid, np.where(mask, 0.0, vals), mask)

    @classmethod
    def from_free(cls, grid: Grid, free_values) -> "ScalarField":
        """Field in the discrete constrained space from its interior values."""
        vals = np.zeros(grid.size)
        vals[grid.interior] = free_values
        return cls(grid, vals, grid.collar)

    @classmethod
    def zeros(cls, grid: Grid, constrained: bool = True) -> "ScalarField":
        return cls.from_function(grid, lambda x: 0.0, constrained)

    @property
    def free(self) -> np.ndarray:
        return ~self.constrained

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values, self.constrained)

    def __mul__(self, c: float) -> "ScalarField":
        return self.with_values(c * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class PairIndicator:
    """Pair weight ``1[x in G] * 1[x' in G]`` used in place of ``H``."""

    mask: np.ndarray


@lru_cache(maxsize=64)
def _cell_average(kernel: Kernel, spacing: tuple[float, ...], offset: tuple[int, ...]) -> float:
    """Mean of ``k_delta`` over the grid cell centred at ``offset * spacing``."""
    delta = kernel.delta
    if len(spacing) == 1:
        h, = spacing
        c = offset[0] * h
        lo, hi = c - 0.5 * h, c + 0.5 * h
        lo, hi = max(lo, -delta), min(hi, delta)
        if hi <= lo:
            return 0.0
        brk = [0.0] if lo < 0 < hi else []
        return adaptive_gauss_legendre(lambda s: kernel.eval(np.abs(s)), lo, hi, tol=1e-14 * kernel.amplitude * h,
                                       breakpoints=brk) / h
    hx, hy = spacing
    cx, cy = offset[0] * hx, offset[1] * hy
    ylo, yhi = cy - 0.5 * hy, cy + 0.5 * hy
    gy, gw = composite_nodes(0.0, 1.0, 1, 12)

    def column(xs):
        reach = np.sqrt(np.maximum(delta * delta - xs * xs, 0.0))
        a, b = np.maximum(ylo, -reach), np.minimum(yhi, reach)
        total = np.zeros_like(xs)
        # split at y = 0 where the hat profile has its kink
        for s, t in ((a, np.minimum(b, 0.0)), (np.maximum(a, 0.0), b)):
            length = np.maximum(t - s, 0.0)
            y = s[:, None] + length[:, None] * gy[None]
            total += length * (kernel.eval(np.hypot(xs[:, None], y)) @ gw)
        return total

    xlo, xhi = max(cx - 0.5 * hx, -delta), min(cx + 0.5 * hx, delta)
    if xhi <= xlo:
        return 0.0
    # kinks where the horizon circle crosses the cell's horizontal edges, and at x = 0
    brk = [s * math.sqrt(delta**2 - yy**2) for yy in (ylo, yhi) if abs(yy) < delta for s in (-1, 1)] + [0.0]
    total = adaptive_gauss_legendre(column, xlo, xhi, tol=1e-10 * kernel.amplitude * hx * hy,
                                    order=10, breakpoints=brk)
    return total / (hx * hy)


def pair_stencil(grid: Grid, kernel: Kernel, scheme: QuadratureScheme = DEFAULT_SCHEME):
    """Half stencil of offsets and the factor ``k / r**p`` attached to each."""
    if kernel.delta > grid.collar_width * (1 + HORIZON_RTOL):
        raise ValueError(f"horizon {kernel.delta} exceeds the grid collar {grid.collar_width}")
    if kernel.dim != grid.dim:
        raise ValueError("kernel and grid dimensions differ")
    return _pair_stencil(grid.spacing.tobytes(), tuple(grid.spacing), kernel, scheme.rule)


@lru_cache(maxsize=32)
def _pair_stencil(_key, spacing, kernel, rule):
    spacing = np.asarray(spacing)
    if rule == "node_midpoint":
        offsets = stencil(spacing, kernel.delta)
        r = np.sqrt(((offsets * spacing) ** 2).sum(axis=1))
        factors = kernel.eval(r) / r**kernel.p
    else:
        reach = kernel.delta + 0.5 * float(np.sqrt((spacing**2).sum()))
        offsets = stencil(spacing, reach, strict=False)
        r = np.sqrt(((offsets * spacing) ** 2).sum(axis=1))
        avg = np.array([_cell_average(kernel, tuple(spacing), tuple(int(v) for v in o)) for o in offsets])
        factors = avg / r**kernel.p
        keep = factors > 0
        offsets, factors = offsets[keep], factors[keep]
    offsets.setflags(write=False)
    factors.setflags(write=False)
    return offsets, factors


def _weights(grid: Grid, region) -> np.ndarray:
    return grid.reshape(grid.trapezoid_weights(region))


def _pair_weight(grid: Grid, h):
    """Nodal array and combiner producing the pair coefficient on shifted views."""
    if isinstance(h, PairIndicator):
        mask = grid.reshape(np.asarray(h.mask, dtype=bool))
        return mask, lambda a, b: (a & b).astype(float)
    hv = grid.reshape(h.nodal(grid))
    return hv, lambda a, b: 0.5 * (a + b)


def _check_grid(*fields: ScalarField):
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid is not grid:
            raise ValueError("fields live on different grids")
    return grid


def _abs_pow(d: np.ndarray, p: float) -> np.ndarray:
    return d * d if p == 2 else np.abs(d) ** p


def _signed_pow(d: np.ndarray, q: float) -> np.ndarray:
    """``|d|**(q-1) * d``, written to stay finite at ``d = 0`` for ``q < 2``."""
    return d if q == 2 else np.sign(d) * np.abs(d) ** (q - 1)


def pair_terms(u: ScalarField, h, kernel: Kernel, scheme: QuadratureScheme = DEFAULT_SCHEME, region="omega"):
    """Yield ``(offset, slice_a, slice_b, term)`` with one orientation of every pair."""
    grid = u.grid
    offsets, factors = pair_stencil(grid, kernel, scheme)
    w = _weights(grid, region)
    hv, combine = _pair_weight(grid, h)
    uv = grid.reshape(u.values)
    for o, fac in zip(offsets, factors):
        sa, sb = shifted_slices(grid.shape, o)
        term = w[sa] * w[sb] * combine(hv[sa], hv[sb]) * fac * _abs_pow(uv[sa] - uv[sb], kernel.p)
        yield o, sa, sb, term


def nonlocal_energy(u: ScalarField, h, kernel: Kernel, scheme: QuadratureScheme = DEFAULT_SCHEME,
                    region="omega") -> float:
    """Quadrature of the double integral of ``H k(|x'-x|)/|x'-x|^p |u(x')-u(x)|^p``.

    ``region`` is ``"omega"`` (closed box), ``"omega_delta"`` (whole grid) or
    a boolean node mask.  ``h`` is a :class:`Coefficient` or a
    :class:`PairIndicator`.
    """
    partial = [float(term.sum()) for *_, term in pair_terms(u, h, kernel, scheme, region)]
    return 2.0 * math.fsum(partial)


def block_pair_sums(u: ScalarField, h, kernel: Kernel, scheme: QuadratureScheme = DEFAULT_SCHEME,
                    region="omega") -> np.ndarray:
    """Matrix ``S[i, j]`` of the energy restricted to pairs in ``B_i x B_j``.

    ``h`` must be a :class:`~nonlocal_plap.coefficient.Simple` coefficient;
    nodes are assigned to blocks with its tie-breaking rule.  Entries are
    exact-rounded sums over both orientations.
    """
    grid = u.grid
    labels = h.block_index(grid.nodes)
    labels = grid.reshape(np.where(labels >= 0, labels, h.m))
    m = h.m + 1  # extra label for nodes outside the closed box
    parts: list[list[float]] = [[] for _ in range(m * m)]
    for _, sa, sb, term in pair_terms(u, h, kernel, scheme, region):
        la, lb = labels[sa].ravel(), labels[sb].ravel()
        t = term.ravel()
        for key in np.unique(la * m + lb):
            sel = (la * m + lb) == key
            s = float(t[sel].sum())
            i, j = divmod(int(key), m)
            parts[i * m + j].append(s)
            parts[j * m + i].append(s)
    sums = np.array([math.fsum(p) for p in parts]).reshape(m, m)
    return sums[: h.m, : h.m]


def nonlocal_form(u: ScalarField, w: ScalarField, h, kernel: Kernel,
                  scheme: QuadratureScheme = DEFAULT_SCHEME) -> float:
    """Discrete ``B_h(u, w)`` over the whole grid; linear in ``w``."""
    grid = _check_grid(u, w)
    offsets, factors = pair_stencil(grid, kernel, scheme)
    wt = _weights(grid, "omega_delta")
    hv, combine = _pair_weight(grid, h)
    uv, wv = grid.reshape(u.values), grid.reshape(w.values)
    partial = []
    for o, fac in zip(offsets, factors):
        sa, sb = shifted_slices(grid.shape, o)
        coef = wt[sa] * wt[sb] * combine(hv[sa], hv[sb]) * fac
        # same association as the energy terms, so B(u, u) = E(u) bit for bit when p = 2
        partial.append(float((coef * (_signed_pow(uv[sa] - uv[sb], kernel.p) * (wv[sa] - wv[sb]))).sum()))
    return 2.0 * math.fsum(partial)


def load(f: ScalarField, w: ScalarField) -> float:
    """Quadrature of ``f * w`` over the closed box (``f`` is zero on the collar)."""
    grid = _check_grid(f, w)
    return math.fsum(grid.trapezoid_weights("omega") * f.values * w.values)


def objective_and_gradient(u: ScalarField, f: ScalarField, h, kernel: Kernel,
                           scheme: QuadratureScheme = DEFAULT_SCHEME) -> tuple[float, np.ndarray]:
    """``J(u) = E(u)/p - (f, u)`` over the whole grid and its full nodal gradient."""
    grid = _check_grid(u, f)
    p = kernel.p
    offsets, factors = pair_stencil(grid, kernel, scheme)
    wt = _weights(grid, "omega_delta")
    hv, combine = _pair_weight(grid, h)
    uv = grid.reshape(u.values)
    grad = np.zeros(grid.shape)
    partial = []
    for o, fac in zip(offsets, factors):
        sa, sb = shifted_slices(grid.shape, o)
        coef = wt[sa] * wt[sb] * combine(hv[sa], hv[sb]) * fac
        d = uv[sa] - uv[sb]
        partial.append(float((coef * _abs_pow(d, p)).sum()))
        g = 2.0 * coef * _signed_pow(d, p)
        grad[sa] += g
        grad[sb] -= g
    w_omega = grid.trapezoid_weights("omega")
    fw = w_omega * f.values
    value = 2.0 * math.fsum(partial) / p - math.fsum(fw * u.values)
    return value, grad.ravel() - fw


def energy_gradient(u: ScalarField, f: ScalarField, h, kernel: Kernel,
                    scheme: QuadratureScheme = DEFAULT_SCHEME) -> np.ndarray:
    """Partial derivatives of ``J`` with respect to the free nodal values."""
    return objective_and_gradient(u, f, h, kernel, scheme)[1][u.free]


def objective(u: ScalarField, f: ScalarField, h, kernel: Kernel,
              scheme: QuadratureScheme = DEFAULT_SCHEME) -> float:
    return nonlocal_energy(u, h, kernel, scheme, "omega_delta") / kernel.p - load(f, u)


def local_energy(u: ScalarField, h: Coefficient, p: float) -> float:
    """Trapezoid quadrature of ``h |grad u|^p`` over the closed box.

    Gradients are centred differences on the box nodes, second-order
    one-sided on its faces, so collar values never enter.
    """
    grid = u.grid
    sub = grid.omega_slices
    if any(s.stop - s.start < 3 for s in sub):
        raise ValueError("need at least two interior nodes per axis")
    uv = grid.reshape(u.values)[sub]
    grads = np.gradient(uv, *grid.spacing, edge_order=2)
    if grid.dim == 1:
        grads = [grads]
    norm2 = sum(g * g for g in grads)
    dens = norm2 if p == 2 else norm2 ** (p / 2)
    hv = grid.reshape(h.nodal(grid))[sub]
    w = grid.reshape(grid.trapezoid_weights("omega"))[sub]
    return math.fsum((w * hv * dens).ravel())
