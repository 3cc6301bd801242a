"""Gaussian-process machinery shared by every emulator variant.

Everything goes through a Cholesky factor of the training covariance; no
explicit inverse is ever formed.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import math
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import BasisError, SingularCovarianceError, StructuralError
from .kernels import EmulatorKind, KernelParams, PairwiseTerms, check_params, diagonal_covariance

LOG_2PI = math.log(2.0 * math.pi)
Z95 = 1.96

JITTER_START = 1e-10
JITTER_MAX = 1e-4


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    """Training records ``(x_i, t_i, y_i)``.

    ``inputs`` is ``(n, p)`` in ``[0, 1]``, ``fidelities`` is ``(n, q)`` in
    ``(0, 1]`` and ``outputs`` has length ``n``.  Identical ``(x, t)`` rows
    are rejected because they make the noise-free covariance singular.
    """

    inputs: np.ndarray
    fidelities: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.outputs, dtype=float).reshape(-1)
        n = y.size
        x = x.reshape(n, -1) if x.size or n else x.reshape(0, 0)
        t = np.asarray(self.fidelities, dtype=float).reshape(n, -1) if n else np.zeros((0, 0))
        if x.shape[0] != n or t.shape[0] != n:
            raise StructuralError("inputs, fidelities and outputs disagree on n")
        if np.any(x < 0) or np.any(x > 1):
            raise StructuralError("input coordinates must lie in [0, 1]")
        if np.any(t <= 0) or np.any(t > 1):
            raise StructuralError("fidelity coordinates must lie in (0, 1]")
        if not np.all(np.isfinite(y)):
            raise StructuralError("outputs must be finite")
        dup = _first_duplicate(np.hstack([x, t]))
        if dup is not None:
            raise StructuralError(f"records {dup[0]} and {dup[1]} share the same (x, t)")
        for name, arr in (("inputs", x), ("fidelities", t), ("outputs", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.outputs.size

    @property
    def p(self) -> int:
        return self.inputs.shape[1]

    @property
    def q(self) -> int:
        return self.fidelities.shape[1]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.inputs, self.fidelities, self.outputs):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
            h.update(repr(arr.shape).encode())
        return h.hexdigest()


def _first_duplicate(rows: np.ndarray) -> Optional[Tuple[int, int]]:
    seen = {}
    for i, row in enumerate(rows):
        key = row.tobytes()
        if key in seen:
            return seen[key], i
        seen[key] = i
    return None


class BasisKind(str, enum.Enum):
    CONSTANT = "constant"
    LINEAR_X = "linear-in-x"
    LINEAR_XT = "linear-in-x-and-t"


@dataclasses.dataclass(frozen=True)
class BasisSpec:
    kind: BasisKind
    p: int
    q: int

    def __post_init__(self):
        object.__setattr__(self, "kind", BasisKind(self.kind))

    @property
    def m(self) -> int:
        if self.kind is BasisKind.CONSTANT:
            return 1
        if self.kind is BasisKind.LINEAR_X:
            return 1 + self.p
        return 1 + self.p + self.q

    def evaluate(self, X, T=None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cols = [np.ones((X.shape[0], 1))]
        if self.kind is not BasisKind.CONSTANT:
            cols.append(X)
        if self.kind is BasisKind.LINEAR_XT:
            T = np.zeros((X.shape[0], self.q)) if T is None else np.asarray(T, float)
            cols.append(T.reshape(X.shape[0], self.q))
        return np.hstack(cols)


def default_basis(model, p: int, q: int) -> BasisSpec:
    """Linear in x: the mean belongs to the exact-solution process, the
    discrepancy is zero-mean."""
    return BasisSpec(BasisKind.LINEAR_X, p, q)


@dataclasses.dataclass(frozen=True)
class CovMatrixFactorization:
    lower: np.ndarray
    jitter: float

    @property
    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        return cho_solve((self.lower, True), b, check_finite=False)

    def half_solve(self, b: np.ndarray) -> np.ndarray:
        """``L^{-1} b``."""
        return solve_triangular(self.lower, b, lower=True, check_finite=False)


@dataclasses.dataclass(frozen=True)
class PredictiveDistribution:
    mean: float
    variance: float

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    @property
    def interval95(self) -> Tuple[float, float]:
        half = Z95 * self.sd
        return self.mean - half, self.mean + half


def cholesky_factor(sigma: np.ndarray, max_jitter: float = JITTER_MAX) -> CovMatrixFactorization:
    """Cholesky factor with escalating diagonal jitter.

    Tries jitter 0, then ``1e-10 * mean(diag)`` growing tenfold up to
    ``max_jitter * mean(diag)``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise StructuralError(f"covariance must be square, got {sigma.shape}")
    if not np.all(np.isfinite(sigma)):
        raise SingularCovarianceError("covariance contains non-finite entries")
    n = sigma.shape[0]
    scale = float(np.mean(np.diag(sigma))) if n else 1.0
    jitters = [0.0]
    j = JITTER_START
    while j <= max_jitter * (1 + 1e-9):
        jitters.append(j * scale)
        j *= 10.0
    for jit in jitters:
        try:
            L = np.linalg.cholesky(sigma + jit * np.eye(n) if jit else sigma)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.diag(L) > 0):
            return CovMatrixFactorization(L, jit)
    dup = _first_duplicate(sigma)
    msg = "covariance is not positive definite at maximum jitter"
    if dup is not None:
        msg += f"; rows {dup[0]} and {dup[1]} are identical (duplicate training points?)"
    raise SingularCovarianceError(msg, duplicate_pair=dup)


def assemble_covariance(data: Dataset, params: KernelParams, model) -> np.ndarray:
    """Training covariance matrix ``K_eta`` for ``model``."""
    return PairwiseTerms(data.inputs, data.fidelities, data.inputs, data.fidelities).covariance(
        model, params
    )


def gls_beta(factor: CovMatrixFactorization, F: np.ndarray, y: np.ndarray):
    """Generalised least squares ``(F^T S^-1 F)^-1 F^T S^-1 y``.

    Returns ``(beta, A)`` where ``A = L^{-1} F``.
    """
    A = factor.half_solve(F)
    b = factor.half_solve(y)
    FtSF = A.T @ A
    try:
        chol = np.linalg.cholesky(FtSF)
    except np.linalg.LinAlgError as exc:
        raise BasisError(
            "F^T K^-1 F is singular; the mean basis is not identifiable, use a smaller basis"
        ) from exc
    beta = cho_solve((chol, True), A.T @ b)
    return beta, A


def _loglik_from_factor(factor: CovMatrixFactorization, resid: np.ndarray) -> float:
    z = factor.half_solve(resid)
    n = resid.size
    return -0.5 * n * LOG_2PI - 0.5 * factor.log_det - 0.5 * float(z @ z)


def log_likelihood(
    data: Dataset,
    params: KernelParams,
    model,
    basis: Optional[BasisSpec] = None,
    beta=None,
) -> float:
    """Gaussian log-likelihood including the ``-(n/2) log 2 pi`` constant.

    ``beta`` falls back to ``params.beta`` and then to the GLS estimate.
    """
    basis = basis or default_basis(model, data.p, data.q)
    factor = cholesky_factor(assemble_covariance(data, params, model))
    F = basis.evaluate(data.inputs, data.fidelities)
    if beta is None:
        beta = params.beta
    if beta is None:
        beta, _ = gls_beta(factor, F, data.outputs)
    return _loglik_from_factor(factor, data.outputs - F @ np.asarray(beta, float))


class GaussianProcess:
    """A GP conditioned on training data with fixed hyperparameters.

    Factorises once at construction, then predicts any number of points.
    ``beta`` is ``params.beta`` when supplied, else the GLS estimate.
    """

    def __init__(
        self,
        data: Dataset,
        params: KernelParams,
        model,
        basis: Optional[BasisSpec] = None,
        terms: Optional[PairwiseTerms] = None,
    ):
        self.data = data
        self.model = EmulatorKind(model)
        self.basis = basis or default_basis(self.model, data.p, data.q)
        check_params(self.model, params, data.p, data.q)
        terms = terms or PairwiseTerms(data.inputs, data.fidelities, data.inputs, data.fidelities)
        self.factor = cholesky_factor(terms.covariance(self.model, params))
        self.F = self.basis.evaluate(data.inputs, data.fidelities)
        self.beta_gls, A = gls_beta(self.factor, self.F, data.outputs)
        self._A = A
        self._FtSF_chol = np.linalg.cholesky(A.T @ A)
        if params.beta is None:
            params = params.replace(beta=self.beta_gls)
        self.params = params
        self._resid_w = {}

    @property
    def jitter(self) -> float:
        return self.factor.jitter

    def log_likelihood(self) -> float:
        return _loglik_from_factor(self.factor, self.data.outputs - self.F @ self.params.beta)

    def _weights(self, beta):
        key = beta.tobytes()
        if key not in self._resid_w:
            self._resid_w[key] = self.factor.solve(self.data.outputs - self.F @ beta)
        return self._resid_w[key]

    def predict_arrays(self, X, T=None, uq: str = "basis-adjusted", beta=None):
        """Predictive means and variances at ``(X, T)``; ``T`` defaults to 0.

        ``uq`` is ``"plug-in"`` (fixed beta) or ``"basis-adjusted"`` (GLS beta
        plus the variance inflation for its estimation uncertainty).
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if T is None:
            T = np.zeros((X.shape[0], self.data.q))
        T = np.asarray(T, dtype=float).reshape(X.shape[0], self.data.q)
        if uq == "basis-adjusted":
            beta = self.beta_gls
        elif uq == "plug-in":
            beta = self.params.beta if beta is None else np.asarray(beta, float)
        else:
            raise StructuralError(f"unknown uq mode {uq!r}")
        cross = PairwiseTerms(X, T, self.data.inputs, self.data.fidelities)
        k = cross.covariance(self.model, self.params)
        prior_var = diagonal_covariance(self.model, self.params, X, T)
        f = self.basis.evaluate(X, T)
        mean = f @ beta + k @ self._weights(beta)
        V = self.factor.half_solve(k.T)
        var = prior_var - np.sum(V * V, axis=0)
        if uq == "basis-adjusted":
            R = f - V.T @ self._A
            W = solve_triangular(self._FtSF_chol, R.T, lower=True, check_finite=False)
            var = var + np.sum(W * W, axis=0)
        return mean, np.maximum(var, 0.0)

    def predict(self, x_star, t_star=None, uq: str = "basis-adjusted") -> PredictiveDistribution:
        T = None if t_star is None else np.atleast_2d(t_star)
        mean, var = self.predict_arrays(np.atleast_2d(x_star), T, uq=uq)
        return PredictiveDistribution(float(mean[0]), float(var[0]))


def predict(
    data: Dataset,
    params: KernelParams,
    model,
    x_star,
    uq: str = "basis-adjusted",
    t_star=None,
    basis: Optional[BasisSpec] = None,
) -> PredictiveDistribution:
    """Predict ``eta(x*, t*)`` (``t* = 0`` by default) from the training data."""
    return GaussianProcess(data, params, model, basis).predict(x_star, t_star, uq=uq)
