"""Covariance functions for the multi-fidelity emulators.

Scalar functions (``se_kernel``, ``kernel1_t``, ...) evaluate one pair of
points and are kept deliberately literal.  The vectorised path used by the
GP machinery goes through :class:`PairwiseTerms`, which caches the
per-dimension distance arrays of a pair of point sets so that repeated
likelihood evaluations only pay for an ``exp`` and a few tensor
contractions.
"""

from __future__ import annotations

import dataclasses
import enum
from typing import Optional

import numpy as np

from .errors import StructuralError


class EmulatorKind(str, enum.Enum):
    STANDARD_GP = "standard-gp"
    HIGH_FIDELITY_GP = "high-fidelity-gp"
    TWY_ARITH = "twy-arith"
    TWY_GEOM = "twy-geom"
    CONFIG_K1 = "config-k1"
    CONFIG_K2 = "config-k2"

    @property
    def uses_fidelity(self) -> bool:
        return self is not EmulatorKind.HIGH_FIDELITY_GP

    @property
    def has_discrepancy(self) -> bool:
        return self in _DISCREPANCY_KINDS

    @property
    def is_twy(self) -> bool:
        return self in (EmulatorKind.TWY_ARITH, EmulatorKind.TWY_GEOM)

    @property
    def is_config(self) -> bool:
        return self in (EmulatorKind.CONFIG_K1, EmulatorKind.CONFIG_K2)


_DISCREPANCY_KINDS = frozenset(
    {
        EmulatorKind.TWY_ARITH,
        EmulatorKind.TWY_GEOM,
        EmulatorKind.CONFIG_K1,
        EmulatorKind.CONFIG_K2,
    }
)


def _vec(value) -> Optional[np.ndarray]:
    if value is None:
        return None
    return np.atleast_1d(np.asarray(value, dtype=float)).copy()


@dataclasses.dataclass(frozen=True)
class KernelParams:
    """Covariance hyperparameters plus mean coefficients.

    Parameters
    ----------
    gamma : array_like
        Weights of the stationary SE kernel on the exact-solution part.
    alpha : array_like, optional
        Weights of the SE kernel on the input part of the discrepancy.
    theta : array_like, optional
        Fidelity weights.  For the standard GP these are SE weights on the
        fidelity columns.
    sigma1_sq, sigma2_sq : float
        Variances of the exact-solution and discrepancy processes.
    beta : array_like, optional
        Mean coefficients; ``None`` until estimated.
    l, l_r : float, array_like
        Kernel 2 exponents.  ``l_r`` defaults to 2 for every fidelity.
    twy_power : float
        Exponent of ``min(t1, t2)`` in the single-fidelity TWY kernel.
    """

    gamma: np.ndarray
    alpha: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    sigma1_sq: float = 1.0
    sigma2_sq: float = 0.0
    beta: Optional[np.ndarray] = None
    l: float = 2.0
    l_r: Optional[np.ndarray] = None
    twy_power: float = 4.0

    def __post_init__(self):
        for name in ("gamma", "alpha", "theta", "beta", "l_r"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        object.__setattr__(self, "sigma1_sq", float(self.sigma1_sq))
        object.__setattr__(self, "sigma2_sq", float(self.sigma2_sq))
        object.__setattr__(self, "l", float(self.l))
        object.__setattr__(self, "twy_power", float(self.twy_power))
        for name in ("gamma", "alpha", "theta", "l_r"):
            v = getattr(self, name)
            if v is not None and not np.all(v > 0):
                raise StructuralError(f"{name} must be strictly positive, got {v}")
        if self.sigma1_sq <= 0 or self.sigma2_sq < 0:
            raise StructuralError("variances must be positive")
        if self.l <= 0 or self.twy_power <= 0:
            raise StructuralError("kernel exponents must be positive")

    @classmethod
    def from_bayes(cls, sigma_sq, lam, **kwargs) -> "KernelParams":
        """Build from the ``(sigma^2, lambda)`` reparametrisation."""
        return cls(sigma1_sq=sigma_sq, sigma2_sq=lam * sigma_sq, **kwargs)

    @property
    def lam(self) -> float:
        return self.sigma2_sq / self.sigma1_sq

    def exponents(self, q: int) -> np.ndarray:
        if self.l_r is None:
            return np.full(q, 2.0)
        if self.l_r.size != q:
            raise StructuralError(f"l_r has length {self.l_r.size}, expected {q}")
        return self.l_r

    def replace(self, **changes) -> "KernelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "KernelParams":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def check_params(model: EmulatorKind, params: KernelParams, p: int, q: int) -> None:
    """Raise :class:`StructuralError` unless ``params`` fit ``model`` on (p, q)."""
    model = EmulatorKind(model)

    def need(name, size):
        v = getattr(params, name)
        if v is None:
            raise StructuralError(f"{model.value} requires {name}")
        if v.size != size:
            raise StructuralError(f"{name} has length {v.size}, expected {size}")

    need("gamma", p)
    if model is EmulatorKind.HIGH_FIDELITY_GP:
        return
    if q < 1:
        raise StructuralError(f"{model.value} requires at least one fidelity column")
    if model is EmulatorKind.STANDARD_GP:
        need("theta", q)
        return
    need("alpha", p)
    if model.is_config:
        need("theta", q)
    if model is EmulatorKind.CONFIG_K2:
        params.exponents(q)


# ---------------------------------------------------------------------------
# Scalar kernels
# ---------------------------------------------------------------------------


def se_kernel(u, v, weights) -> float:
    """Squared-exponential correlation ``exp(-sum w_s (u_s - v_s)^2)``."""
    u, v, w = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (u, v, weights))
    if not (u.shape == v.shape == w.shape):
        raise StructuralError(f"length mismatch: {u.shape}, {v.shape}, {w.shape}")
    return float(np.exp(-np.sum(w * (u - v) ** 2)))


def kernel1_t(t1, t2, theta) -> float:
    """Kernel 1: covariance of ``kappa(t) - kappa(0)`` for a unit SE process."""
    t1, t2, th = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (t1, t2, theta))
    if not (t1.shape == t2.shape == th.shape):
        raise StructuralError("length mismatch in kernel1_t")
    return float(
        np.exp(-np.sum(th * (t1 - t2) ** 2))
        - np.exp(-np.sum(th * t1**2))
        - np.exp(-np.sum(th * t2**2))
        + 1.0
    )


def kernel2_t(t1, t2, theta, l_r=None, l=2.0) -> float:
    """Kernel 2: ``[sum_r theta_r min(t1_r, t2_r)^l_r]^l``."""
    t1, t2, th = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (t1, t2, theta))
    lr = np.full(th.shape, 2.0) if l_r is None else np.atleast_1d(np.asarray(l_r, float))
    if not (t1.shape == t2.shape == th.shape == lr.shape):
        raise StructuralError("length mismatch in kernel2_t")
    return float(np.sum(th * np.minimum(t1, t2) ** lr) ** l)


def twy_t(t1: float, t2: float, l: float) -> float:
    """Brownian-motion-like fidelity kernel ``min(t1, t2)^l``."""
    # same array power as kernel2_t, so the q = 1 reduction is bit-exact
    return float((np.minimum(np.atleast_1d(float(t1)), float(t2)) ** np.atleast_1d(float(l)))[0])


def aggregate_fidelity(t, mode: str) -> float:
    """Collapse a fidelity vector to one number (``arith`` or ``geom`` mean).

    The geometric mean of a vector with a zero component is its limit, 0.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if mode == "arith":
        return float(np.mean(t))
    if mode == "geom":
        if np.any(t <= 0):
            return 0.0
        return float(np.exp(np.mean(np.log(t))))
    raise StructuralError(f"unknown aggregation mode {mode!r}")


def _aggregate_rows(T: np.ndarray, mode: str) -> np.ndarray:
    if mode == "arith":
        return T.mean(axis=1)
    with np.errstate(divide="ignore"):
        logs = np.log(T)
    out = np.exp(logs.mean(axis=1))
    out[np.any(T <= 0, axis=1)] = 0.0
    return out


def composite_kernel(model, params: KernelParams, point1, point2) -> float:
    """Covariance between two ``(x, t)`` points under ``model``."""
    model = EmulatorKind(model)
    x1, t1 = (np.atleast_1d(np.asarray(a, dtype=float)) for a in point1)
    x2, t2 = (np.atleast_1d(np.asarray(a, dtype=float)) for a in point2)
    check_params(model, params, x1.size, t1.size)
    if model is EmulatorKind.HIGH_FIDELITY_GP:
        return params.sigma1_sq * se_kernel(x1, x2, params.gamma)
    if model is EmulatorKind.STANDARD_GP:
        w = np.concatenate([params.gamma, params.theta])
        return params.sigma1_sq * se_kernel(
            np.concatenate([x1, t1]), np.concatenate([x2, t2]), w
        )
    if model.is_twy:
        mode = "arith" if model is EmulatorKind.TWY_ARITH else "geom"
        kt = twy_t(aggregate_fidelity(t1, mode), aggregate_fidelity(t2, mode), params.twy_power)
    elif model is EmulatorKind.CONFIG_K1:
        kt = kernel1_t(t1, t2, params.theta)
    else:
        kt = kernel2_t(t1, t2, params.theta, params.exponents(t1.size), params.l)
    return params.sigma1_sq * se_kernel(x1, x2, params.gamma) + params.sigma2_sq * se_kernel(
        x1, x2, params.alpha
    ) * kt


# ---------------------------------------------------------------------------
# Vectorised assembly
# ---------------------------------------------------------------------------


class PairwiseTerms:
    """Parameter-free distance arrays between two point sets.

    Built once per (training, training) or (test, training) pair and reused
    for every parameter value.
    """

    def __init__(self, x1, t1, x2, t2):
        self.x1 = np.atleast_2d(np.asarray(x1, dtype=float))
        self.x2 = np.atleast_2d(np.asarray(x2, dtype=float))
        self.t1 = np.asarray(t1, dtype=float).reshape(self.x1.shape[0], -1)
        self.t2 = np.asarray(t2, dtype=float).reshape(self.x2.shape[0], -1)
        if self.x1.shape[1] != self.x2.shape[1] or self.t1.shape[1] != self.t2.shape[1]:
            raise StructuralError("point sets have different dimensions")
        self.p = self.x1.shape[1]
        self.q = self.t1.shape[1]
        self.dx2 = (self.x1[:, None, :] - self.x2[None, :, :]) ** 2
        self.dt2 = (self.t1[:, None, :] - self.t2[None, :, :]) ** 2
        self.tmin = np.minimum(self.t1[:, None, :], self.t2[None, :, :])
        self.tdot_terms = self.t1[:, None, :] * self.t2[None, :, :]
        self._agg = {}

    def aggregated_min(self, mode: str) -> np.ndarray:
        if mode not in self._agg:
            a1 = _aggregate_rows(self.t1, mode)
            a2 = _aggregate_rows(self.t2, mode)
            self._agg[mode] = np.minimum(a1[:, None], a2[None, :])
        return self._agg[mode]

    def se(self, weights) -> np.ndarray:
        return np.exp(-(self.dx2 @ weights))

    def fidelity_kernel(self, model: EmulatorKind, params: KernelParams) -> np.ndarray:
        """The K_t factor of the discrepancy for a twy-* or config-* model."""
        if model.is_twy:
            mode = "arith" if model is EmulatorKind.TWY_ARITH else "geom"
            return self.aggregated_min(mode) ** params.twy_power
        th = params.theta
        if model is EmulatorKind.CONFIG_K1:
            # expm1 rearrangement of the four-term form: no cancellation near t = 0
            a = self.t1**2 @ th
            b = self.t2**2 @ th
            cross = 2.0 * (self.tdot_terms @ th)
            return np.expm1(-a)[:, None] * np.expm1(-b)[None, :] + np.exp(
                -(a[:, None] + b[None, :])
            ) * np.expm1(cross)
        lr = params.exponents(self.q)
        return ((self.tmin**lr) @ th) ** params.l

    def covariance(self, model, params: KernelParams) -> np.ndarray:
        model = EmulatorKind(model)
        check_params(model, params, self.p, self.q)
        if model is EmulatorKind.HIGH_FIDELITY_GP:
            return params.sigma1_sq * self.se(params.gamma)
        if model is EmulatorKind.STANDARD_GP:
            return params.sigma1_sq * np.exp(-(self.dx2 @ params.gamma) - (self.dt2 @ params.theta))
        K = params.sigma1_sq * self.se(params.gamma)
        if params.sigma2_sq > 0:
            K = K + params.sigma2_sq * self.se(params.alpha) * self.fidelity_kernel(model, params)
        return K


def cross_covariance(model, params: KernelParams, x1, t1, x2, t2) -> np.ndarray:
    """Covariance matrix between point sets ``(x1, t1)`` and ``(x2, t2)``."""
    return PairwiseTerms(x1, t1, x2, t2).covariance(model, params)


def diagonal_covariance(model, params: KernelParams, X, T) -> np.ndarray:
    """Prior variances ``K((x, t), (x, t))`` row by row, without the full matrix."""
    model = EmulatorKind(model)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    T = np.asarray(T, dtype=float).reshape(X.shape[0], -1)
    check_params(model, params, X.shape[1], T.shape[1])
    base = np.full(X.shape[0], params.sigma1_sq)
    if not model.has_discrepancy or params.sigma2_sq == 0:
        return base
    if model.is_twy:
        mode = "arith" if model is EmulatorKind.TWY_ARITH else "geom"
        kt = _aggregate_rows(T, mode) ** params.twy_power
    elif model is EmulatorKind.CONFIG_K1:
        a = T**2 @ params.theta
        kt = np.expm1(-a) ** 2 + np.exp(-2 * a) * np.expm1(2 * a)
    else:
        kt = ((T ** params.exponents(T.shape[1])) @ params.theta) ** params.l
    return base + params.sigma2_sq * kt
