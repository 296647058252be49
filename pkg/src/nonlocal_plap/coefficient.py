"""Bounded diffusion coefficients ``h``, midpoint weights and mollification.

Three representations share one interface:

* :class:`ClosedForm` - a polynomial in the first coordinate,
* :class:`Simple` - piecewise constant on disjoint boxes,
* :class:`Sampled` - nodal values on a :class:`~nonlocal_plap.domain.Grid`,
  linearly interpolated.

``eval_h`` is zero outside the open box.  Energies sample ``h`` on the closed
box instead (:meth:`Coefficient.nodal`), the boundary having measure zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ._quadrature import adaptive_gauss_legendre, composite_nodes
from .domain import Domain, Grid, as_points
from .kernel import sphere_measure


class Coefficient:
    """Base class; subclasses implement ``_raw`` on the closed box."""

    kind: str
    domain: Domain
    clamp: bool = True

    def _raw(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def h_min(self) -> float:
        return self.range_on(self.domain.lower, self.domain.upper)[0]

    @property
    def h_max(self) -> float:
        return self.range_on(self.domain.lower, self.domain.upper)[1]

    def range_on(self, lo, hi) -> tuple[float, float]:
        raise NotImplementedError

    def eval_h(self, x):
        x = as_points(x, self.domain.dim)
        vals = self._raw(x)
        if self.clamp:
            vals = np.where(self.domain.contains(x), vals, 0.0)
        return vals if vals.ndim else float(vals)

    __call__ = eval_h

    def closure_values(self, x) -> np.ndarray:
        """Values on the closed box, zero strictly outside it."""
        x = as_points(x, self.domain.dim)
        vals = self._raw(x)
        if self.clamp:
            vals = np.where(self.domain.contains(x, closed=True), vals, 0.0)
        return vals

    def nodal(self, grid: Grid) -> np.ndarray:
        return self.closure_values(grid.nodes)


def midpoint_H(h: Coefficient, x1, x2):
    """``(h(x1) + h(x2)) / 2``."""
    return 0.5 * (h.eval_h(x1) + h.eval_h(x2))


_EXPRESSIONS = {"const": 1, "affine": 2, "quadratic": 3}


@dataclass(frozen=True, eq=False)
class ClosedForm(Coefficient):
    """``h(x) = c0 + c1*x1 + c2*x1**2`` truncated to the expression's arity.

    ``clamp=False`` gives a test fixture that ignores the outside-box zero.
    """

    expr: str
    params: tuple[float, ...]
    domain: Domain
    clamp: bool = True
    kind = "closed_form"

    def __post_init__(self):
        if self.expr not in _EXPRESSIONS:
            raise ValueError(f"unknown expression {self.expr!r}")
        if len(self.params) != _EXPRESSIONS[self.expr]:
            raise ValueError(f"{self.expr} takes {_EXPRESSIONS[self.expr]} parameters")
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if self.h_min < 0:
            raise ValueError("coefficient must be nonnegative on the box")

    @property
    def coeffs(self) -> np.ndarray:
        c = np.zeros(3)
        c[: len(self.params)] = self.params
        return c

    def _raw(self, x):
        c0, c1, c2 = self.coeffs
        t = x[..., 0]
        return c0 + c1 * t + c2 * t * t

    def range_on(self, lo, hi):
        a, b = float(np.atleast_1d(lo)[0]), float(np.atleast_1d(hi)[0])
        c0, c1, c2 = self.coeffs
        ts = [a, b]
        if c2 != 0 and a < -c1 / (2 * c2) < b:
            ts.append(-c1 / (2 * c2))
        vals = [c0 + c1 * t + c2 * t * t for t in ts]
        return min(vals), max(vals)

    def ranges_on(self, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized :meth:`range_on` over arrays of boxes ``(k, dim)``."""
        c0, c1, c2 = self.coeffs
        a, b = lo[:, 0], hi[:, 0]
        f = lambda t: c0 + c1 * t + c2 * t * t
        lo_v, hi_v = np.minimum(f(a), f(b)), np.maximum(f(a), f(b))
        if c2 != 0:
            v = -c1 / (2 * c2)
            inside = (a < v) & (v < b)
            lo_v = np.where(inside, np.minimum(lo_v, f(v)), lo_v)
            hi_v = np.where(inside, np.maximum(hi_v, f(v)), hi_v)
        return lo_v, hi_v

    def lipschitz(self) -> float:
        c0, c1, c2 = self.coeffs
        reach = max(abs(self.domain.lower[0]), abs(self.domain.upper[0]))
        return abs(c1) + 2 * abs(c2) * reach


@dataclass(frozen=True, eq=False)
class Simple(Coefficient):
    """Piecewise-constant coefficient ``sum_i h_i * 1[x in B_i]``.

    Boxes are half-open on the right, except on faces shared with the
    domain's upper boundary.  Overlaps are rejected; on exact ties the lowest
    box index wins.
    """

    boxes: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...]
    values: tuple[float, ...]
    domain: Domain
    kind = "simple"
    clamp = True

    def __post_init__(self):
        boxes = tuple((tuple(map(float, np.atleast_1d(lo))), tuple(map(float, np.atleast_1d(hi))))
                      for lo, hi in self.boxes)
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(boxes) != len(self.values) or not boxes:
            raise ValueError("need one value per box and at least one box")
        lo, hi = self.box_arrays
        if np.any(hi <= lo):
            raise ValueError("degenerate block")
        if np.any(lo < np.asarray(self.domain.lower) - 1e-12) or np.any(hi > np.asarray(self.domain.upper) + 1e-12):
            raise ValueError("blocks must lie inside the domain")
        if min(self.values) < 0:
            raise ValueError("coefficient values must be nonnegative")
        if len(boxes) <= 2000:
            overlap = np.all(np.minimum(hi[:, None], hi[None]) - np.maximum(lo[:, None], lo[None]) > 1e-12, axis=-1)
            np.fill_diagonal(overlap, False)
            if overlap.any():
                raise ValueError("blocks overlap")
        covered = float(np.prod(hi - lo, axis=1).sum())
        if abs(covered - self.domain.measure) > 1e-9 * self.domain.measure:
            raise ValueError(f"blocks cover measure {covered}, domain has {self.domain.measure}")

    @property
    def box_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([b[0] for b in self.boxes])
        hi = np.array([b[1] for b in self.boxes])
        return lo, hi

    @property
    def m(self) -> int:
        return len(self.boxes)

    def block_index(self, x) -> np.ndarray:
        """Index of the block containing each point of the closed box, -1 outside."""
        x = as_points(x, self.domain.dim)
        lo, hi = self.box_arrays
        top = np.asarray(self.domain.upper)
        flat = x.reshape(-1, self.domain.dim)
        out = np.full(flat.shape[0], -1)
        # reversed so that the lowest index is written last and wins ties
        for i in range(self.m - 1, -1, -1):
            upper_ok = (flat < hi[i]) | ((hi[i] >= top) & (flat <= hi[i]))
            inside = np.all((flat >= lo[i]) & upper_ok, axis=1)
            out[inside] = i
        return out.reshape(x.shape[:-1])

    def _raw(self, x):
        idx = self.block_index(x)
        vals = np.asarray(self.values)
        return np.where(idx >= 0, vals[np.maximum(idx, 0)], 0.0)

    def range_on(self, lo, hi):
        blo, bhi = self.box_arrays
        lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
        touch = np.all((blo <= hi) & (bhi > lo), axis=1)
        vals = np.asarray(self.values)[touch]
        return float(vals.min()), float(vals.max())


@dataclass(frozen=True, eq=False)
class Sampled(Coefficient):
    """Nodal samples on a grid, evaluated by multilinear interpolation.

    Values are not clamped to the domain: mollified coefficients are
    legitimately nonzero in a thin layer outside it.
    """

    grid: Grid
    values: np.ndarray
    clamp: bool = False
    kind = "sampled"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.size,):
            raise ValueError("sample count does not match grid")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_interp", RegularGridInterpolator(
            self.grid.axes, values.reshape(self.grid.shape), bounds_error=False, fill_value=0.0))

    @property
    def domain(self) -> Domain:
        return self.grid.domain

    def _raw(self, x):
        return self._interp(x.reshape(-1, self.grid.dim)).reshape(x.shape[:-1])

    def range_on(self, lo, hi):
        lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
        inside = np.all((self.grid.nodes >= lo) & (self.grid.nodes <= hi), axis=1)
        corners = np.stack([g.ravel() for g in np.meshgrid(*zip(lo, hi), indexing="ij")], axis=-1)
        vals = np.concatenate([self.values[inside], self._raw(corners)])
        return float(vals.min()), float(vals.max())

    def nodal(self, grid: Grid) -> np.ndarray:
        if grid is self.grid:
            return np.asarray(self.values)
        return super().nodal(grid)


def checkerboard(v1: float, v2: float, cells: int, domain: Domain) -> Simple:
    """Alternating values on ``cells`` equal cells per axis."""
    edges = [np.linspace(lo, hi, cells + 1) for lo, hi in zip(domain.lower, domain.upper)]
    boxes, values = [], []
    for idx in np.ndindex(*(cells,) * domain.dim):
        lo = tuple(e[i] for e, i in zip(edges, idx))
        hi = tuple(e[i + 1] for e, i in zip(edges, idx))
        boxes.append((lo, hi))
        values.append(v1 if sum(idx) % 2 == 0 else v2)
    return Simple(tuple(boxes), tuple(values), domain)


def slabs(values: Sequence[float], breaks: Sequence[float], domain: Domain) -> Simple:
    """Blocks split along the first axis at ``breaks``."""
    if len(values) != len(breaks) + 1:
        raise ValueError("need one more value than breakpoints")
    cuts = [domain.lower[0], *breaks, domain.upper[0]]
    if np.any(np.diff(cuts) <= 0):
        raise ValueError("breakpoints must be increasing and inside the domain")
    boxes = [((a, *domain.lower[1:]), (b, *domain.upper[1:])) for a, b in zip(cuts[:-1], cuts[1:])]
    return Simple(tuple(boxes), tuple(values), domain)


def parse_coefficient(spec: str, domain: Domain) -> Coefficient:
    """Build a coefficient from a config string.

    ``const:<v>``, ``affine:<a>,<b>``, ``quadratic:<a>,<b>,<c>``,
    ``simple:<v1>,...,<vm>@<b1>,...,<b(m-1)>`` (slabs along x1) and
    ``checkerboard:<v1>,<v2>,<cells>``.
    """
    name, _, args = spec.partition(":")
    try:
        if name in _EXPRESSIONS:
            return ClosedForm(name, tuple(float(a) for a in args.split(",")), domain)
        if name == "simple":
            vals, _, cuts = args.partition("@")
            return slabs([float(v) for v in vals.split(",")],
                         [float(c) for c in cuts.split(",")] if cuts else [], domain)
        if name == "checkerboard":
            v1, v2, cells = args.split(",")
            return checkerboard(float(v1), float(v2), int(cells), domain)
    except ValueError as exc:
        raise ValueError(f"bad coefficient spec {spec!r}: {exc}") from None
    raise ValueError(f"unknown coefficient spec {spec!r}")


def staircase(v, h_min: float, h_max: float, levels: int):
    """Lower staircase of ``v`` with ``levels`` equal steps on ``[h_min, h_max]``."""
    v = np.asarray(v, dtype=float)
    span = h_max - h_min
    if span <= 0:
        return np.full_like(v, h_min)
    step = span / levels
    s = h_min + np.floor((v - h_min) / step) * step
    return np.clip(s, h_min, h_max)


def simple_approx(h: Coefficient, levels: int, probe_cells=None) -> Simple:
    """Simple function below ``h`` with ``levels`` steps.

    The domain is cut into probe cells; each cell takes the staircase value
    of the minimum of ``h`` over the cell, and runs of equal value along the
    first axis are merged into one block.
    """
    if levels < 1:
        raise ValueError("need at least one level")
    domain = h.domain
    if probe_cells is None:
        probe_cells = 1024 if domain.dim == 1 else 128
    edges = [np.linspace(lo, hi, probe_cells + 1) for lo, hi in zip(domain.lower, domain.upper)]
    idx = np.stack([g.ravel() for g in np.meshgrid(*[np.arange(probe_cells)] * domain.dim, indexing="ij")], axis=-1)
    lo = np.stack([edges[a][idx[:, a]] for a in range(domain.dim)], axis=-1)
    hi = np.stack([edges[a][idx[:, a] + 1] for a in range(domain.dim)], axis=-1)
    if isinstance(h, ClosedForm):
        cell_min = h.ranges_on(lo, hi)[0]
    else:
        cell_min = np.array([h.range_on(a, b)[0] for a, b in zip(lo, hi)])
    h_min, h_max = h.h_min, h.h_max
    level = staircase(cell_min, h_min, h_max, levels).reshape((probe_cells,) * domain.dim)

    boxes, values = [], []
    rows = level.reshape(probe_cells, -1)
    for col in range(rows.shape[1]):
        run = rows[:, col]
        starts = np.flatnonzero(np.r_[True, run[1:] != run[:-1]])
        ends = np.r_[starts[1:], probe_cells]
        other = np.unravel_index(col, (probe_cells,) * (domain.dim - 1)) if domain.dim > 1 else ()
        for s, e in zip(starts, ends):
            b_lo = (edges[0][s], *(edges[a + 1][i] for a, i in enumerate(other)))
            b_hi = (edges[0][e], *(edges[a + 1][i + 1] for a, i in enumerate(other)))
            boxes.append((b_lo, b_hi))
            values.append(run[s])
    return Simple(tuple(boxes), tuple(values), domain)


_BUMP_MASS: dict[int, float] = {}


def _bump(t2: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t2)
    inside = t2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t2[inside]))
    return out


def bump_mass(dim: int) -> float:
    """Integral of ``exp(-1/(1-|x|^2))`` over the unit ball of ``R^dim``."""
    if dim not in _BUMP_MASS:
        radial = adaptive_gauss_legendre(lambda r: _bump(r * r) * r ** (dim - 1), 0.0, 1.0, tol=1e-15)
        _BUMP_MASS[dim] = sphere_measure(dim) * radial
    return _BUMP_MASS[dim]


@dataclass(frozen=True)
class Mollifier:
    """Smooth radial bump of unit mass supported in the ball of radius ``radius``."""

    radius: float
    dim: int = 1

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("mollifier radius must be positive")

    def __call__(self, x):
        x = as_points(x, self.dim)
        t2 = (x * x).sum(axis=-1) / self.radius**2
        return _bump(np.asarray(t2, dtype=float)) / (bump_mass(self.dim) * self.radius**self.dim)

    def mass(self) -> float:
        r = self.radius
        radial = adaptive_gauss_legendre(lambda s: self(np.stack([s] + [np.zeros_like(s)] * (self.dim - 1), -1))
                                         * s ** (self.dim - 1), 0.0, r, tol=1e-14)
        return sphere_measure(self.dim) * radial


def mollify(h: Coefficient, m: Mollifier, grid: Grid, panels: int = 8, order: int = 8) -> Sampled:
    """Nodal samples of ``eta_r * h`` on ``grid``.

    The convolution uses a tensor Gauss-Legendre rule on ``[-r, r]^dim`` whose
    weights are renormalized to unit sum, so constants are reproduced exactly
    and every sample is a convex average of values of ``h``.
    """
    if not m.radius > 0:
        raise ValueError("mollifier radius must be positive")
    if m.radius >= grid.collar_width:
        raise ValueError("mollifier radius must be smaller than the grid collar")
    if m.dim != grid.dim:
        raise ValueError("mollifier and grid dimensions differ")
    y1, w1 = composite_nodes(-m.radius, m.radius, panels, order)
    pts = np.stack([g.ravel() for g in np.meshgrid(*[y1] * grid.dim, indexing="ij")], axis=-1)
    wts = np.prod(np.stack([g.ravel() for g in np.meshgrid(*[w1] * grid.dim, indexing="ij")], axis=-1), axis=-1)
    wts = wts * m(pts)
    keep = wts > 0
    pts, wts = pts[keep], wts[keep] / math.fsum(wts[keep])
    out = np.empty(grid.size)
    chunk = max(1, 2_000_000 // len(wts))
    for start in range(0, grid.size, chunk):
        x = grid.nodes[start:start + chunk]
        vals = h.eval_h(x[:, None, :] - pts[None])
        out[start:start + chunk] = vals @ wts
    return Sampled(grid, out)
