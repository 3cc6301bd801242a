"""Independent reference implementations written with scalar ``math`` only.

Nothing here imports the package's numerical code, so agreement with it is
evidence rather than tautology.
"""

import itertools
import math


def se(u, v, w):
    s = 0.0
    for a, b, c in zip(u, v, w):
        s += c * (a - b) * (a - b)
    return math.exp(-s)


def fidelity_kernel(kind, t1, t2, theta, l=2.0, l_r=None, twy_power=4.0):
    q = len(t1)
    if kind == "config-k1":
        zero = [0.0] * q
        return se(t1, t2, theta) - se(t1, zero, theta) - se(t2, zero, theta) + 1.0
    if kind == "config-k2":
        l_r = l_r or [2.0] * q
        s = 0.0
        for r in range(q):
            s += theta[r] * min(t1[r], t2[r]) ** l_r[r]
        return s**l
    if kind == "twy-arith":
        a, b = sum(t1) / q, sum(t2) / q
    elif kind == "twy-geom":
        a = math.prod(t1) ** (1.0 / q)
        b = math.prod(t2) ** (1.0 / q)
    else:
        raise ValueError(kind)
    return min(a, b) ** twy_power


def covariance(kind, p, x1, t1, x2, t2):
    """``p`` is a plain dict of parameters (lists and floats)."""
    if kind == "high-fidelity-gp":
        return p["sigma1_sq"] * se(x1, x2, p["gamma"])
    if kind == "standard-gp":
        return p["sigma1_sq"] * se(list(x1) + list(t1), list(x2) + list(t2), list(p["gamma"]) + list(p["theta"]))
    kt = fidelity_kernel(kind, t1, t2, p.get("theta"), p.get("l", 2.0), p.get("l_r"), p.get("twy_power", 4.0))
    return p["sigma1_sq"] * se(x1, x2, p["gamma"]) + p["sigma2_sq"] * se(x1, x2, p["alpha"]) * kt


def currin(x1, x2):
    bracket = 1.0 - math.exp(-1.0 / (2.0 * x2)) if x2 > 0 else 1.0
    return bracket * (2300 * x1**3 + 1900 * x1**2 + 2092 * x1 + 60) / (100 * x1**3 + 500 * x1**2 + 4 * x1 + 20)


def park(x1, x2, x3, x4):
    # x1 floored at 1e-10 in the first term, as the simulator contract states
    a = max(x1, 1e-10)
    first = a / 2.0 * (math.sqrt(1.0 + (x2 + x3 * x3) * x4 / (a * a)) - 1.0)
    return first + (x1 + 3.0 * x4) * math.exp(1.0 + math.sin(x3))


def nodes(cell):
    out, k = [], 0
    while k * cell < 1.0 - 1e-12:
        out.append(k * cell)
        k += 1
    out.append(1.0)
    return out


def corner_blend(f, x, t):
    """Multilinear interpolation of ``f`` on the mesh of cell widths ``t``."""
    lows, highs, fracs = [], [], []
    for xr, tr in zip(x, t):
        grid = nodes(tr)
        j = 0
        while j + 2 < len(grid) and grid[j + 1] <= xr:
            j += 1
        lows.append(grid[j])
        highs.append(grid[j + 1])
        fracs.append((xr - grid[j]) / (grid[j + 1] - grid[j]))
    total = 0.0
    for corner in itertools.product((0, 1), repeat=len(x)):
        w, pt = 1.0, []
        for r, c in enumerate(corner):
            w *= fracs[r] if c else 1.0 - fracs[r]
            pt.append(highs[r] if c else lows[r])
        total += w * f(*pt)
    return total
