"""Radial interaction kernels with compact support and their normalization.

Every kernel integrates to ``C_N`` over its horizon ball, where ``C_N`` is the
mean of ``|sigma . e|**p`` over the unit sphere.  With this scaling the
nonlocal p-energy of a smooth field tends to the local one as the horizon
shrinks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from ._quadrature import adaptive_gauss_legendre


class Family(str, Enum):
    CONSTANT = "constant"
    HAT = "hat"
    TRUNCATED_QUADRATIC = "truncated_quadratic"

    @classmethod
    def parse(cls, name: str) -> "Family":
        aliases = {"tquad": cls.TRUNCATED_QUADRATIC}
        if name in aliases:
            return aliases[name]
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown kernel family {name!r}; use constant, hat or tquad") from None


def sphere_measure(dim: int) -> float:
    """Surface measure of the unit sphere in ``R^dim``."""
    return 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def ball_volume(dim: int, radius: float) -> float:
    return sphere_measure(dim) * radius**dim / dim


def c_n(dim: int, p: float, e=None, tol: float = 1e-10) -> float:
    """Average of ``|sigma . e|**p`` over the unit sphere of ``R^dim``.

    Exact in 1D; adaptive Gauss-Legendre over the circle (2D) or in spherical
    coordinates (3D) otherwise.  ``e`` defaults to the first basis vector.
    """
    if not p > 1:
        raise ValueError(f"exponent p must exceed 1, got {p}")
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    if dim == 1:
        return 1.0
    e = np.eye(dim)[0] if e is None else np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    if dim == 2:
        alpha = math.atan2(e[1], e[0])
        kinks = [(alpha + s * math.pi / 2) % (2 * math.pi) for s in (-1, 1)]
        total = adaptive_gauss_legendre(lambda t: np.abs(np.cos(t - alpha)) ** p,
                                        0.0, 2 * math.pi, tol=tol, breakpoints=kinks)
        return total / (2 * math.pi)

    def inner(theta: float) -> float:
        # sigma . e = R sin(phi + beta) along the meridian at azimuth theta
        a = e[0] * math.cos(theta) + e[1] * math.sin(theta)
        b = e[2]
        radius, beta = math.hypot(a, b), math.atan2(b, a)
        zeros = [k * math.pi - beta for k in range(-1, 3)]
        return adaptive_gauss_legendre(lambda phi: np.abs(radius * np.sin(phi + beta)) ** p * np.sin(phi),
                                       0.0, math.pi, tol=0.1 * tol, breakpoints=zeros)

    outer = adaptive_gauss_legendre(np.vectorize(inner), 0.0, 2 * math.pi, tol=tol, order=12)
    return outer / (4 * math.pi)


@lru_cache(maxsize=None)
def _cached_c_n(dim: int, p: float) -> float:
    return c_n(dim, p)


NORMALIZATIONS = ("cn", "inverse_cn")

_RADIAL_PROFILES = {
    Family.CONSTANT: lambda t: np.ones_like(t),
    Family.HAT: lambda t: 1.0 - t,
    Family.TRUNCATED_QUADRATIC: lambda t: 1.0 - t * t,
}


def _profile_mass(family: Family, dim: int) -> float:
    """Integral of the unit-horizon profile over the unit ball."""
    s = sphere_measure(dim)
    if family is Family.CONSTANT:
        return s / dim
    if family is Family.HAT:
        return s / (dim * (dim + 1))
    return 2 * s / (dim * (dim + 2))


@dataclass(frozen=True)
class Kernel:
    """Member ``k_delta`` of a kernel family.

    With the default ``normalization="cn"`` the kernel has mass ``C_N`` over
    its horizon ball.  ``"inverse_cn"`` gives mass ``1/C_N`` instead, which
    is the scaling whose local limit carries no dimensional constant when
    ``dim > 1`` (the two coincide in 1D, where ``C_1 = 1``).
    """

    family: Family
    delta: float
    p: float
    dim: int
    normalization: str = "cn"
    c_n: float = field(init=False)
    amplitude: float = field(init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.family, Family):
            object.__setattr__(self, "family", Family.parse(self.family))
        if not self.delta > 0:
            raise ValueError(f"horizon must be positive, got {self.delta}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        cn = _cached_c_n(self.dim, float(self.p))
        object.__setattr__(self, "c_n", cn)
        object.__setattr__(self, "amplitude", self.mass / (_profile_mass(self.family, self.dim) * self.delta**self.dim))

    @property
    def mass(self) -> float:
        """Target value of the kernel integral over the horizon ball."""
        return self.c_n if self.normalization == "cn" else 1.0 / self.c_n

    def __call__(self, r):
        return self.eval(r)

    def eval(self, r):
        """Kernel value at distance ``r``; zero at and beyond the horizon."""
        r = np.asarray(r, dtype=float)
        t = r / self.delta
        out = np.where(t < 1.0, self.amplitude * _RADIAL_PROFILES[self.family](np.minimum(t, 1.0)), 0.0)
        return out if out.ndim else float(out)

    def with_delta(self, delta: float) -> "Kernel":
        return Kernel(self.family, delta, self.p, self.dim, self.normalization)


def check_normalization(kernel: Kernel, tol: float = 1e-13) -> float:
    """Quadrature value of ``(1/C_N) * integral of k_delta over B(0, delta)``.

    Integrates in polar coordinates: the angular factor is the sphere measure
    and the radial integral is done by adaptive Gauss-Legendre.
    """
    radial = adaptive_gauss_legendre(lambda r: kernel.eval(r) * r ** (kernel.dim - 1),
                                     0.0, kernel.delta, tol=tol * kernel.c_n)
    return sphere_measure(kernel.dim) * radial / kernel.c_n
