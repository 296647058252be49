"""Named scalar fields used as fixed fields, loads and test functions.

Each fixture maps points of shape ``(n, dim)`` to values of shape ``(n,)``.
One-dimensional fixtures depend on the first coordinate only.
"""

from __future__ import annotations

import numpy as np


def _x1(x):
    return x[:, 0]


FIELDS = {
    "zero": lambda x: np.zeros(len(x)),
    "one": lambda x: np.ones(len(x)),
    "x": lambda x: _x1(x).copy(),
    "x2": lambda x: _x1(x) ** 2,
    "sin": lambda x: np.sin(np.pi * _x1(x)),
    "bubble": lambda x: np.prod(x * (1.0 - x), axis=1),
    "plane": lambda x: x[:, 0] + 0.5 * x[:, 1] if x.shape[1] > 1 else x[:, 0].copy(),
    "indicator": lambda x: ((_x1(x) > 0.3) & (_x1(x) < 0.7)).astype(float),
}

# discontinuities along the first axis, used to split quadrature panels
BREAKPOINTS = {"indicator": (0.3, 0.7)}


def field(name: str):
    try:
        return FIELDS[name]
    except KeyError:
        raise ValueError(f"unknown field {name!r}; choose from {', '.join(sorted(FIELDS))}") from None


def breakpoints(name: str, dim: int):
    return [BREAKPOINTS.get(name, ())] + [()] * (dim - 1)
