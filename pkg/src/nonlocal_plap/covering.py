"""Disjoint scaled copies of the box with small oscillation of a target field.

A piece is the box ``a + eps * (closure(Omega) - c)`` where ``c`` is the
centre of ``Omega``; so ``a`` is the centre of the piece and always lies in
it.  Pieces come from dyadic subdivision, which tiles the box exactly:
disjointness and the uncovered measure are exact box arithmetic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._quadrature import composite_nodes
from .domain import Domain, as_points

PROBES = {1: 9, 2: 5}
SAFETY = 1.1


class CoverError(RuntimeError):
    """The residual tolerance was not reached within the depth cap."""


@dataclass(frozen=True)
class CoverPiece:
    center: tuple[float, ...]
    eps: float

    def box(self, domain: Domain) -> tuple[np.ndarray, np.ndarray]:
        half = 0.5 * self.eps * domain.sides
        c = np.asarray(self.center)
        return c - half, c + half

    def measure(self, domain: Domain) -> float:
        return self.eps**domain.dim * domain.measure


@dataclass(frozen=True)
class Cover:
    domain: Domain
    pieces: tuple[CoverPiece, ...]
    k: int
    residual_measure: float
    residual_cells: tuple[CoverPiece, ...] = field(default=(), repr=False)
    residual_history: tuple[float, ...] = field(default=(), repr=False)

    def boxes(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays ``(lo, hi)`` of shape ``(len(pieces), dim)``."""
        if not self.pieces:
            empty = np.empty((0, self.domain.dim))
            return empty, empty.copy()
        lo, hi = zip(*(p.box(self.domain) for p in self.pieces))
        return np.array(lo), np.array(hi)

    def covered_measure(self) -> float:
        return math.fsum(p.measure(self.domain) for p in self.pieces)


def pairwise_disjoint(lo: np.ndarray, hi: np.ndarray, tol: float = 0.0) -> bool:
    """True when no two boxes overlap in a set of positive measure."""
    order = np.argsort(lo[:, 0], kind="stable")
    lo, hi = lo[order], hi[order]
    for i in range(len(lo)):
        # only boxes starting before this one ends along axis 0 can overlap it
        j = i + 1
        while j < len(lo) and lo[j, 0] < hi[i, 0] - tol:
            if np.all(np.minimum(hi[i], hi[j]) - np.maximum(lo[i], lo[j]) > tol):
                return False
            j += 1
    return True


def _probe_points(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    n = PROBES[len(lo)]
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)


def _evaluate(f, x: np.ndarray, dim: int) -> np.ndarray:
    # closure_values keeps coefficients finite on the faces of the box
    fn = getattr(f, "closure_values", f)
    return np.broadcast_to(np.asarray(fn(as_points(x, dim)), dtype=float), (len(x),))


def oscillation(f, lo, hi) -> float:
    """Oscillation estimate of ``f`` on the closed box ``[lo, hi]``.

    Exact for coefficients that expose ``range_on``; otherwise the spread
    over a probe grid times a safety factor.
    """
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if hasattr(f, "range_on"):
        a, b = f.range_on(lo, hi)
        return float(b - a)
    vals = _evaluate(f, _probe_points(lo, hi), len(lo))
    return SAFETY * float(vals.max() - vals.min())


def build_vitali_cover(domain: Domain, f, k: int, residual_tol: float, max_depth: int = 40,
                       strict_interior: bool = False) -> Cover:
    """Dyadic cover of ``domain`` by pieces on which ``f`` oscillates by at most ``1/k``.

    Cells are split into ``2**dim`` halves until accepted.  Construction
    stops after the first depth at which the uncovered measure is at most
    ``residual_tol``.  With ``strict_interior`` cells touching the boundary
    are never accepted, so pieces have their closure inside the open box.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not residual_tol > 0:
        raise ValueError("residual_tol must be positive")
    lower, upper = np.asarray(domain.lower), np.asarray(domain.upper)
    total = domain.measure
    accepted: list[CoverPiece] = []
    pending = [CoverPiece(tuple(domain.center), 1.0)]
    history = []
    residual = total
    for depth in range(max_depth + 1):
        nxt = []
        for cell in pending:
            lo, hi = cell.box(domain)
            touches = np.any(np.isclose(lo, lower, rtol=0, atol=1e-14 * domain.sides)) or \
                np.any(np.isclose(hi, upper, rtol=0, atol=1e-14 * domain.sides))
            if not (strict_interior and touches) and oscillation(f, lo, hi) <= 1.0 / k:
                accepted.append(cell)
            else:
                nxt.append(cell)
        residual = max(total - math.fsum(p.measure(domain) for p in accepted), 0.0)
        history.append(residual)
        if residual <= residual_tol:
            return Cover(domain, tuple(accepted), k, residual, tuple(nxt), tuple(history))
        pending = []
        quarter = 0.25 * np.asarray(domain.sides)
        for cell in nxt:
            c = np.asarray(cell.center)
            for signs in itertools.product((-1.0, 1.0), repeat=domain.dim):
                pending.append(CoverPiece(tuple(c + cell.eps * quarter * np.array(signs)), 0.5 * cell.eps))
    raise CoverError(f"uncovered measure {residual:.3e} exceeds {residual_tol:.3e} after {max_depth} subdivisions")


def _box_integral(fn, lo, hi, breakpoints, panels: int, order: int) -> float:
    nodes, weights = [], []
    for a, b, brk in zip(lo, hi, breakpoints):
        x, w = composite_nodes(float(a), float(b), panels, order, brk)
        nodes.append(x)
        weights.append(w)
    grids = np.meshgrid(*nodes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = weights[0]
    for w in weights[1:]:
        wts = np.multiply.outer(wts, w)
    return float(np.dot(wts.ravel(), fn(pts)))


def partition_error(cover: Cover, f, xi, breakpoints=None, panels: int = 2, order: int = 10) -> float:
    """``|int f xi - sum_i f(a_i) int_{piece_i} xi|`` over the box.

    Integrals are composite Gauss-Legendre per piece and per residual cell.
    ``breakpoints`` (one sequence per axis) marks discontinuities of ``xi``.
    """
    domain = cover.domain
    dim = domain.dim
    breakpoints = breakpoints if breakpoints is not None else [()] * dim
    fx = lambda x: _evaluate(f, x, dim)  # noqa: E731
    xx = lambda x: _evaluate(xi, x, dim)  # noqa: E731
    parts = []
    for piece in cover.pieces:
        lo, hi = piece.box(domain)
        fa = float(fx(np.asarray(piece.center)[None])[0])
        parts.append(_box_integral(lambda x: (fx(x) - fa) * xx(x), lo, hi, breakpoints, panels, order))
    for cell in cover.residual_cells:
        lo, hi = cell.box(domain)
        parts.append(_box_integral(lambda x: fx(x) * xx(x), lo, hi, breakpoints, panels, order))
    return abs(math.fsum(parts))


def l1_norm(xi, domain: Domain, breakpoints=None, panels: int = 64, order: int = 10) -> float:
    dim = domain.dim
    breakpoints = breakpoints if breakpoints is not None else [()] * dim
    return _box_integral(lambda x: np.abs(_evaluate(xi, x, dim)), domain.lower, domain.upper,
                         breakpoints, panels, order)


def sup_abs(fn, domain: Domain, samples: int = 2001) -> float:
    """Largest ``|fn|`` on a uniform probe grid of the closed box."""
    per_axis = samples if domain.dim == 1 else int(math.isqrt(samples))
    axes = [np.linspace(a, b, per_axis) for a, b in zip(domain.lower, domain.upper)]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    return float(np.max(np.abs(_evaluate(fn, pts, domain.dim))))


def eq1_bound(cover: Cover, f, xi, breakpoints=None, slack: float = 1e-6) -> float:
    """``(1/k) ||xi||_1 + sup|f| sup|xi| residual + slack``."""
    domain = cover.domain
    return (l1_norm(xi, domain, breakpoints) / cover.k
            + sup_abs(f, domain) * sup_abs(xi, domain) * cover.residual_measure + slack)
