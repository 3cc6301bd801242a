"""Synthetic multi-fidelity test functions.

The exact responses are the 2-D Currin and 4-D Park functions.  A
lower-fidelity version ``eta(x, t)`` evaluates the exact function on a
rectangular mesh whose cell widths are the fidelity parameters and
interpolates multilinearly inside each cell.
"""

from __future__ import annotations

import dataclasses
import itertools
from typing import Callable, Dict

import numpy as np

from .errors import StructuralError

PARK_X1_FLOOR = 1e-10


def _check_domain(x, p):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p:
        raise StructuralError(f"expected {p} input coordinates, got shape {x.shape}")
    if np.any(x < 0) or np.any(x > 1) or not np.all(np.isfinite(x)):
        raise StructuralError("inputs must lie in [0, 1]")
    return x


def currin(x):
    """Currin function on [0, 1]^2.  Vectorised over leading axes."""
    x = _check_domain(x, 2)
    x1, x2 = x[..., 0], x[..., 1]
    with np.errstate(divide="ignore"):
        bracket = np.where(x2 > 0, -np.expm1(-0.5 / np.where(x2 > 0, x2, 1.0)), 1.0)
    num = 2300 * x1**3 + 1900 * x1**2 + 2092 * x1 + 60
    den = 100 * x1**3 + 500 * x1**2 + 4 * x1 + 20
    return bracket * num / den


def park(x):
    """Park function on [0, 1]^4; ``x1`` is floored at 1e-10 in the first term."""
    x = _check_domain(x, 4)
    x1, x2, x3, x4 = (x[..., i] for i in range(4))
    x1s = np.maximum(x1, PARK_X1_FLOOR)
    first = 0.5 * x1s * (np.sqrt(1.0 + (x2 + x3**2) * x4 / x1s**2) - 1.0)
    return first + (x1 + 3 * x4) * np.exp(1.0 + np.sin(x3))


@dataclasses.dataclass(frozen=True)
class TestFunction:
    name: str
    p: int
    phi: Callable

    __test__ = False  # not a pytest class

    def __call__(self, x):
        return self.phi(x)


TEST_FUNCTIONS: Dict[str, TestFunction] = {
    "currin": TestFunction("currin", 2, currin),
    "park": TestFunction("park", 4, park),
}


def get_function(name) -> TestFunction:
    if isinstance(name, TestFunction):
        return name
    try:
        return TEST_FUNCTIONS[name]
    except KeyError:
        raise StructuralError(
            f"unknown test function {name!r}; choose from {sorted(TEST_FUNCTIONS)}"
        ) from None


def grid_nodes(cell: float) -> np.ndarray:
    """Nodes ``0, t, 2t, ...`` below 1, with 1 appended (last cell may be narrower)."""
    if not 0 < cell <= 1:
        raise StructuralError(f"cell size must lie in (0, 1], got {cell}")
    k = int(np.floor(1.0 / cell + 1e-9))
    nodes = np.arange(k + 1) * cell
    nodes = nodes[nodes < 1.0 - 1e-12]
    return np.append(nodes, 1.0)


def grid_interpolate(f, t, x) -> float:
    """The multi-fidelity simulator ``eta(x, t)`` at one point."""
    return float(simulate(f, np.atleast_2d(x), np.atleast_2d(t))[0])


def simulate(f, X, T) -> np.ndarray:
    """Vectorised ``eta(x_i, t_i)`` over rows of ``X`` and ``T``."""
    f = get_function(f)
    X = _check_domain(np.atleast_2d(X), f.p)
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if T.shape != X.shape:
        raise StructuralError(f"fidelity array {T.shape} must match inputs {X.shape}")
    out = np.empty(X.shape[0])
    cache = {}
    for i, (x, t) in enumerate(zip(X, T)):
        lo, hi, w = [], [], []
        for r in range(f.p):
            key = float(t[r])
            if key not in cache:
                cache[key] = grid_nodes(key)
            nodes = cache[key]
            j = min(np.searchsorted(nodes, x[r], side="right") - 1, nodes.size - 2)
            a, b = nodes[j], nodes[j + 1]
            lo.append(a)
            hi.append(b)
            w.append((x[r] - a) / (b - a))
        corners = np.array(list(itertools.product((0, 1), repeat=f.p)))
        pts = np.where(corners == 0, lo, hi)
        weights = np.prod(np.where(corners == 0, 1.0 - np.array(w), np.array(w)), axis=1)
        out[i] = weights @ f(pts)
    return out
