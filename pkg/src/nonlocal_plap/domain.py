"""Boxes, their enlargements and shrinkings, and uniform tensor grids.

A :class:`Grid` always covers the box fattened by ``collar_width`` on every
side.  The collar width is an exact multiple of the spacing, so the faces of
the original box pass through grid nodes and node classification can be done
on integer indices rather than on floating point coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# Relative slack used when testing "strictly inside the horizon".
HORIZON_RTOL = 1e-12


@dataclass(frozen=True)
class Domain:
    """Open axis-aligned box ``(lower, upper)`` in one or two dimensions."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if len(lower) != len(upper):
            raise ValueError("lower and upper must have the same length")
        if len(lower) not in (1, 2):
            raise ValueError(f"only 1D and 2D boxes are supported, got dim={len(lower)}")
        if any(u <= l for l, u in zip(lower, upper)):
            raise ValueError(f"degenerate box: lower={lower}, upper={upper}")

    @classmethod
    def unit(cls, dim: int = 1) -> "Domain":
        return cls((0.0,) * dim, (1.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def sides(self) -> np.ndarray:
        return np.subtract(self.upper, self.lower)

    @property
    def measure(self) -> float:
        return float(np.prod(self.sides))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))

    def contains(self, x, closed: bool = False) -> np.ndarray:
        """Membership of points ``x`` (shape ``(..., dim)`` or scalar in 1D)."""
        x = as_points(x, self.dim)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        if closed:
            inside = (x >= lo) & (x <= hi)
        else:
            inside = (x > lo) & (x < hi)
        return np.all(inside, axis=-1)

    def enlarge(self, delta: float) -> "Domain":
        return Domain(tuple(l - delta for l in self.lower), tuple(u + delta for u in self.upper))


def as_points(x, dim: int) -> np.ndarray:
    """Coerce scalars / 1D arrays into an array of points with a trailing ``dim`` axis."""
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return x[..., None]
    if x.shape[-1] != dim:
        raise ValueError(f"expected points with trailing dimension {dim}, got shape {x.shape}")
    return x


def shrink(domain: Domain, r: float) -> Domain:
    """The box of points farther than ``r`` from the boundary."""
    if r < 0:
        raise ValueError("shrink radius must be nonnegative")
    if 2 * r >= domain.sides.min():
        raise ValueError(f"shrinking by r={r} leaves an empty box")
    return Domain(tuple(l + r for l in domain.lower), tuple(u - r for u in domain.upper))


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform tensor grid over the box enlarged by ``collar_width``.

    Nodes are flattened in C order (axis 0 slowest).  ``collar_steps[i]`` is
    the number of spacings making up the collar along axis ``i``.
    """

    domain: Domain
    n_per_axis: tuple[int, ...]
    collar_width: float
    collar_steps: tuple[int, ...]
    spacing: np.ndarray = field(repr=False)
    axes: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n_per_axis

    @property
    def size(self) -> int:
        return int(np.prod(self.n_per_axis))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def omega_slices(self) -> tuple[slice, ...]:
        """Index slices selecting the nodes of the closed box."""
        return tuple(slice(m, n - m) for n, m in zip(self.n_per_axis, self.collar_steps))

    @cached_property
    def closure_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.omega_slices] = True
        mask.setflags(write=False)
        return mask.ravel()

    @cached_property
    def interior(self) -> np.ndarray:
        """True for nodes strictly inside the open box."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[tuple(slice(m + 1, n - m - 1) for n, m in zip(self.n_per_axis, self.collar_steps))] = True
        mask.setflags(write=False)
        return mask.ravel()

    @property
    def collar(self) -> np.ndarray:
        return ~self.interior

    @property
    def node_class(self) -> np.ndarray:
        return np.where(self.interior, "interior", "collar")

    def reshape(self, values) -> np.ndarray:
        return np.asarray(values).reshape(self.shape)

    def mask_of(self, box: Domain, closed: bool = True) -> np.ndarray:
        """Nodes lying in ``box`` (closed by default)."""
        return box.contains(self.nodes, closed=closed)

    def trapezoid_weights(self, region: str | np.ndarray = "omega") -> np.ndarray:
        """Nodal trapezoid weights for the closed box (``omega``) or the whole grid.

        A boolean node mask may be passed instead; the ``omega`` weights are
        then restricted to it.
        """
        if isinstance(region, str):
            if region == "omega":
                per_axis = []
                for n, m, h in zip(self.n_per_axis, self.collar_steps, self.spacing):
                    w = np.zeros(n)
                    w[m:n - m] = h
                    w[m] = w[n - m - 1] = 0.5 * h
                    per_axis.append(w)
            elif region == "omega_delta":
                per_axis = []
                for n, h in zip(self.n_per_axis, self.spacing):
                    w = np.full(n, h)
                    w[0] = w[-1] = 0.5 * h
                    per_axis.append(w)
            else:
                raise ValueError(f"unknown region {region!r}")
            out = per_axis[0]
            for w in per_axis[1:]:
                out = np.multiply.outer(out, w)
            return out.ravel()
        mask = np.asarray(region, dtype=bool)
        if mask.shape != (self.size,):
            raise ValueError("region mask does not match the grid")
        return np.where(mask, self.trapezoid_weights("omega"), 0.0)


def _commensurate_count(side: float, delta: float, n: int, tol: float = 1e-12) -> tuple[int, int]:
    """Smallest node count >= n making delta a whole number of spacings."""
    total = side + 2 * delta
    for count in range(n, n + 1_000_000):
        spacing = total / (count - 1)
        steps = delta / spacing
        m = round(steps)
        if m >= 1 and abs(steps - m) * spacing <= tol:
            return count, m
    raise ValueError(f"no node count >= {n} makes delta={delta} commensurate with side {side}")


def build_grid(domain: Domain, n, delta: float) -> Grid:
    """Uniform grid on the box fattened by ``delta``.

    ``n`` is a per-axis minimum node count; it is raised until ``delta`` is an
    exact multiple of the spacing on every axis.
    """
    if not delta > 0:
        raise ValueError(f"horizon must be positive, got {delta}")
    n = np.broadcast_to(np.atleast_1d(n), (domain.dim,))
    if np.any(n < 3):
        raise ValueError("need at least 3 nodes per axis")
    counts, steps, spacing, axes = [], [], [], []
    for side, lo, hi, n_i in zip(domain.sides, domain.lower, domain.upper, n):
        count, m = _commensurate_count(float(side), float(delta), int(n_i))
        cells = count - 1 - 2 * m
        if cells - 1 < 2:
            raise ValueError(f"fewer than 2 interior nodes along an axis (n={count}, collar steps={m})")
        counts.append(count)
        steps.append(m)
        spacing.append(side / cells)
        # interpolate between the box faces so that boundary nodes are exact
        k = np.arange(count) - m
        axes.append(lo + (hi - lo) * (k / cells))
    spacing = np.array(spacing)
    spacing.setflags(write=False)
    for a in axes:
        a.setflags(write=False)
    return Grid(domain, tuple(counts), float(delta), tuple(steps), spacing, tuple(axes))


def stencil(spacing, radius: float, half: bool = True, strict: bool = True) -> np.ndarray:
    """Integer offsets ``o != 0`` with ``|o * spacing| < radius``.

    With ``half=True`` only the lexicographically positive half is returned
    (one representative of each ``{o, -o}``).  ``strict=False`` uses ``<=``.
    """
    spacing = np.asarray(spacing, dtype=float)
    reach = [int(np.floor(radius / h + 1e-9)) for h in spacing]
    ranges = [np.arange(-r, r + 1) for r in reach]
    offsets = np.stack([g.ravel() for g in np.meshgrid(*ranges, indexing="ij")], axis=-1)
    dist = np.sqrt(((offsets * spacing) ** 2).sum(axis=1))
    if strict:
        keep = dist < radius * (1 - HORIZON_RTOL)
    else:
        keep = dist <= radius * (1 + HORIZON_RTOL)
    keep &= np.any(offsets != 0, axis=1)
    if half:
        first = np.array([o[np.flatnonzero(o)[0]] if np.any(o) else 0 for o in offsets])
        keep &= first > 0
    return offsets[keep]


def shifted_slices(shape, offset) -> tuple[tuple[slice, ...], tuple[slice, ...]]:
    """Slices ``(a, b)`` such that ``X[b]`` holds the ``offset`` neighbours of ``X[a]``."""
    a, b = [], []
    for n, o in zip(shape, offset):
        o = int(o)
        if o >= 0:
            a.append(slice(0, n - o))
            b.append(slice(o, n))
        else:
            a.append(slice(-o, n))
            b.append(slice(0, n + o))
    return tuple(a), tuple(b)


def neighbor_pairs(grid: Grid, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Unordered node pairs ``(i, j)``, ``i < j``, closer than ``delta``.

    Returned as two index arrays sorted lexicographically by ``(i, j)``;
    ``zip(*neighbor_pairs(grid, delta))`` iterates the pairs.
    """
    if delta > grid.collar_width * (1 + HORIZON_RTOL):
        raise ValueError("horizon exceeds the grid collar")
    index = np.arange(grid.size).reshape(grid.shape)
    first, second = [], []
    for o in stencil(grid.spacing, delta):
        sa, sb = shifted_slices(grid.shape, o)
        i, j = index[sa].ravel(), index[sb].ravel()
        first.append(np.minimum(i, j))
        second.append(np.maximum(i, j))
    if not first:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty.copy()
    i = np.concatenate(first)
    j = np.concatenate(second)
    order = np.lexsort((j, i))
    return i[order], j[order]
