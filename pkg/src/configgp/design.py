"""Space-filling designs over the joint input x fidelity space."""

from __future__ import annotations

import csv
import dataclasses
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import pdist

from .errors import StructuralError

INPUT = "input"
FIDELITY = "fidelity"


@dataclasses.dataclass(frozen=True, eq=False)
class Design:
    """An ``n x d`` design with per-column roles and target ranges.

    ``points`` holds the values in their target ranges.  ``criterion`` is
    the optimised objective, when there is one.
    """

    points: np.ndarray
    roles: Tuple[str, ...]
    ranges: Tuple[Tuple[float, float], ...]
    provenance: str
    criterion: Optional[float] = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "roles", tuple(self.roles))
        object.__setattr__(self, "ranges", tuple((float(a), float(b)) for a, b in self.ranges))
        if len(self.roles) != pts.shape[1] or len(self.ranges) != pts.shape[1]:
            raise StructuralError("one role and one range per column required")
        bad = set(self.roles) - {INPUT, FIDELITY}
        if bad:
            raise StructuralError(f"unknown column roles {bad}")
        for j, (lo, hi) in enumerate(self.ranges):
            col = pts[:, j]
            if np.any(col < lo - 1e-12) or np.any(col > hi + 1e-12):
                raise StructuralError(f"column {j} leaves its range ({lo}, {hi})")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def columns(self, role: str) -> np.ndarray:
        idx = [j for j, r in enumerate(self.roles) if r == role]
        return self.points[:, idx]

    @property
    def inputs(self) -> np.ndarray:
        return self.columns(INPUT)

    @property
    def fidelities(self) -> np.ndarray:
        return self.columns(FIDELITY)

    def header(self):
        names, counts = [], {INPUT: 0, FIDELITY: 0}
        for r in self.roles:
            counts[r] += 1
            names.append(("x" if r == INPUT else "t") + str(counts[r]))
        return names


def unit_design(points, n_inputs: int, provenance: str, criterion=None) -> Design:
    d = np.asarray(points).shape[1]
    roles = [INPUT] * n_inputs + [FIDELITY] * (d - n_inputs)
    return Design(points, roles, [(0.0, 1.0)] * d, provenance, criterion)


# ---------------------------------------------------------------------------
# Latin hypercubes
# ---------------------------------------------------------------------------


def random_lhd(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Random midpoint LHD: each column is a permutation of ``(i + 0.5) / n``."""
    levels = (np.arange(n) + 0.5) / n
    return np.column_stack([rng.permutation(levels) for _ in range(d)]) if d else np.zeros((n, 0))


def _min_distance(X: np.ndarray) -> float:
    return float(pdist(X).min()) if X.shape[0] > 1 else math.inf


def maximin_lhd(n: int, d: int, seed=None, iterations: int = 5000, n_inputs: Optional[int] = None) -> Design:
    """Maximin Latin hypercube by random within-column swaps.

    A swap is kept when the minimum pairwise distance does not decrease.
    """
    if n < 2 or d < 1:
        raise StructuralError("maximin_lhd needs n >= 2 and d >= 1")
    rng = np.random.default_rng(seed)
    X = random_lhd(n, d, rng)
    best = _min_distance(X)
    for _ in range(iterations):
        col = rng.integers(d)
        i, j = rng.choice(n, size=2, replace=False)
        X[[i, j], col] = X[[j, i], col]
        cand = _min_distance(X)
        if cand >= best:
            best = cand
        else:
            X[[i, j], col] = X[[j, i], col]
    return unit_design(X, d if n_inputs is None else n_inputs, "maximin-lhd", best)


def maxpro_criterion(X: np.ndarray) -> float:
    """``[mean_{i<j} prod_l (x_il - x_jl)^-2]^(1/d)``; smaller is better."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    with np.errstate(divide="ignore"):
        logs = -2.0 * sum(np.log(pdist(X[:, [l]])) for l in range(d))
    total = np.exp(logs).sum()
    return float((total / (n * (n - 1) / 2)) ** (1.0 / d))


def _row_log_products(X: np.ndarray, i: int) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return -2.0 * np.log(np.abs(X - X[i])).sum(axis=1)


def maxpro(
    n: int,
    d: int,
    seed=None,
    proposals: int = 10000,
    decay: float = 0.999,
    initial_temperature: Optional[float] = None,
    n_inputs: Optional[int] = None,
) -> Design:
    """MaxPro Latin hypercube by simulated annealing over level swaps.

    Works on ``log`` of the pairwise-product sum.  The initial temperature
    defaults to the value at which half of the early uphill moves would be
    accepted.
    """
    if n < 2 or d < 1:
        raise StructuralError("maxpro needs n >= 2 and d >= 1")
    rng = np.random.default_rng(seed)
    X = random_lhd(n, d, rng)
    # P[i, j] = prod_l (x_il - x_jl)^-2, diagonal zeroed
    with np.errstate(divide="ignore"):
        logP = -2.0 * np.log(np.abs(X[:, None, :] - X[None, :, :])).sum(axis=2)
    P = np.exp(logP)
    np.fill_diagonal(P, 0.0)
    total = P.sum() / 2.0

    def propose():
        col = int(rng.integers(d))
        i, j = (int(v) for v in rng.choice(n, size=2, replace=False))
        Y = X.copy()
        Y[[i, j], col] = Y[[j, i], col]
        ri = np.exp(_row_log_products(Y, i))
        rj = np.exp(_row_log_products(Y, j))
        ri[i] = 0.0
        rj[j] = 0.0
        # pair (i, j) appears in both rows; its value is unchanged by the swap
        new_total = total - P[i].sum() - P[j].sum() + P[i, j] + ri.sum() + rj.sum() - ri[j]
        return Y, i, j, ri, rj, new_total

    if initial_temperature is None:
        ups = []
        for _ in range(min(200, proposals) or 1):
            *_, new_total = propose()
            delta = math.log(new_total) - math.log(total)
            if delta > 0:
                ups.append(delta)
        initial_temperature = (np.mean(ups) if ups else 1e-3) / math.log(2.0)

    start = maxpro_criterion(X)
    best_X, best_total = X.copy(), total
    temp = initial_temperature
    for _ in range(proposals):
        Y, i, j, ri, rj, new_total = propose()
        delta = math.log(new_total) - math.log(total)
        if delta <= 0 or rng.random() < math.exp(-delta / temp):
            X = Y
            P[i, :] = ri
            P[:, i] = ri
            P[j, :] = rj
            P[:, j] = rj
            total = new_total
            if total < best_total:
                best_total, best_X = total, X.copy()
        temp *= decay
    crit = maxpro_criterion(best_X)
    design = unit_design(best_X, d if n_inputs is None else n_inputs, "maxpro", crit)
    object.__setattr__(design, "initial_criterion", start)
    return design


# ---------------------------------------------------------------------------
# Combinations and transforms
# ---------------------------------------------------------------------------


def crossed_array(input_design: Design, fidelity_design: Design, mode: str = "crossed", seed=None) -> Design:
    """Pair every input point with every fidelity point.

    ``mode="paired"`` instead gives each input point one randomly chosen
    fidelity row.
    """
    if set(input_design.roles) & set(fidelity_design.roles):
        raise StructuralError("input and fidelity designs must have disjoint column roles")
    if set(input_design.roles) != {INPUT} or set(fidelity_design.roles) != {FIDELITY}:
        raise StructuralError("expected an all-input design and an all-fidelity design")
    A, B = input_design.points, fidelity_design.points
    if mode == "crossed":
        rows = np.hstack([np.repeat(A, B.shape[0], axis=0), np.tile(B, (A.shape[0], 1))])
    elif mode == "paired":
        rng = np.random.default_rng(seed)
        pick = rng.integers(B.shape[0], size=A.shape[0])
        rows = np.hstack([A, B[pick]])
    else:
        raise StructuralError(f"unknown crossing mode {mode!r}")
    return Design(
        rows,
        input_design.roles + fidelity_design.roles,
        input_design.ranges + fidelity_design.ranges,
        "crossed",
    )


def map_ranges(design: Design, ranges: Sequence[Tuple[float, float]]) -> Design:
    """Affinely map each column from its current range onto ``ranges``."""
    if len(ranges) != design.d:
        raise StructuralError(f"need {design.d} ranges, got {len(ranges)}")
    out = np.empty_like(design.points)
    for j, ((lo, hi), (a, b)) in enumerate(zip(ranges, design.ranges)):
        if not lo < hi:
            raise StructuralError(f"inverted range ({lo}, {hi}) for column {j}")
        u = (design.points[:, j] - a) / (b - a)
        out[:, j] = lo + (hi - lo) * u
    return Design(out, design.roles, ranges, design.provenance, design.criterion)


def write_csv(design: Design, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(design.header())
        for row in design.points:
            w.writerow([repr(float(v)) for v in row])


def read_csv(path, ranges=None) -> Design:
    """Import a design; columns are recognised as ``x*`` (input) or ``t*`` (fidelity)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise StructuralError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    roles = []
    for h in header:
        if h.startswith("x"):
            roles.append(INPUT)
        elif h.startswith("t"):
            roles.append(FIDELITY)
        else:
            raise StructuralError(f"unrecognised design column {h!r}")
    pts = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(header))
    if ranges is None:
        ranges = [(min(0.0, float(c.min(initial=0))), max(1.0, float(c.max(initial=1)))) for c in pts.T]
    return Design(pts, roles, ranges, "imported")
