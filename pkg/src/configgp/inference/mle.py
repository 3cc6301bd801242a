"""Multi-start maximum likelihood with the mean coefficients profiled out."""

from __future__ import annotations

import dataclasses
import logging
import warnings
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from ..errors import BasisError, EstimationError, SingularCovarianceError, StructuralError
from ..gp import BasisSpec, Dataset, _loglik_from_factor, cholesky_factor, default_basis, gls_beta
from ..kernels import EmulatorKind, KernelParams, PairwiseTerms, diagonal_covariance

log = logging.getLogger(__name__)

WEIGHT_BOUNDS = (1e-3, 1e3)
VARIANCE_SPAN = 1e6
PENALTY = 1e25


@dataclasses.dataclass(frozen=True)
class MleOptions:
    restarts: int = 5
    max_iter: int = 500
    tolerance: float = 1e-9
    perturbation_sd: float = 0.5
    gradient_step: float = 1e-5
    seed: int = 0


@dataclasses.dataclass
class RestartDiagnostic:
    start: np.ndarray
    log_likelihood: float
    converged: bool
    iterations: int
    message: str


@dataclasses.dataclass
class MleResult:
    params: KernelParams
    log_likelihood: float
    restarts: int
    converged: List[bool]
    initial_log_likelihood: float
    jitter: float
    diagnostics: List[RestartDiagnostic]
    model: EmulatorKind
    basis: BasisSpec


class Layout:
    """Maps a model's free parameters to and from an unconstrained log vector."""

    def __init__(self, model: EmulatorKind, p: int, q: int, output_var: float, fixed: dict):
        self.model = EmulatorKind(model)
        self.p, self.q = p, q
        self.fixed = fixed
        names = [("gamma", p)]
        if self.model.has_discrepancy:
            names.append(("alpha", p))
        if self.model is EmulatorKind.STANDARD_GP or self.model.is_config:
            names.append(("theta", q))
        names.append(("sigma1_sq", 1))
        if self.model.has_discrepancy:
            names.append(("sigma2_sq", 1))
        self.blocks = names
        v = max(output_var, 1e-12)
        lo, hi = [], []
        for name, size in names:
            if name.startswith("sigma"):
                b = (np.log(v / VARIANCE_SPAN), np.log(v * VARIANCE_SPAN))
            else:
                b = tuple(np.log(WEIGHT_BOUNDS))
            lo += [b[0]] * size
            hi += [b[1]] * size
        self.lower = np.array(lo)
        self.upper = np.array(hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def bounds(self):
        return list(zip(self.lower, self.upper))

    def pack(self, params: KernelParams) -> np.ndarray:
        parts = [np.log(np.atleast_1d(getattr(params, name))) for name, _ in self.blocks]
        return np.clip(np.concatenate(parts), self.lower, self.upper)

    def unpack(self, z: np.ndarray) -> KernelParams:
        vals, k = {}, 0
        for name, size in self.blocks:
            chunk = np.exp(z[k : k + size])
            vals[name] = float(chunk[0]) if name.startswith("sigma") else chunk
            k += size
        return KernelParams(**vals, **self.fixed)


class ProfileObjective:
    """Negative profile log-likelihood in log-parameter space."""

    def __init__(self, data: Dataset, model, basis: BasisSpec, layout: Layout):
        self.data = data
        self.model = EmulatorKind(model)
        self.layout = layout
        x, t = data.inputs, data.fidelities
        self.terms = PairwiseTerms(x, t, x, t)
        self.F = basis.evaluate(x, t)
        self.y = data.outputs
        self.evaluations = 0

    def log_likelihood(self, z: np.ndarray) -> Tuple[float, Optional[np.ndarray], float]:
        params = self.layout.unpack(z)
        factor = cholesky_factor(self.terms.covariance(self.model, params))
        beta, _ = gls_beta(factor, self.F, self.y)
        return _loglik_from_factor(factor, self.y - self.F @ beta), beta, factor.jitter

    def __call__(self, z: np.ndarray) -> float:
        self.evaluations += 1
        try:
            ll, _, _ = self.log_likelihood(z)
        except (SingularCovarianceError, BasisError, FloatingPointError):
            return PENALTY
        return -ll if np.isfinite(ll) else PENALTY


def central_gradient(fun, z: np.ndarray, step: float) -> np.ndarray:
    """Central-difference gradient with a common absolute step."""
    z = np.asarray(z, dtype=float)
    g = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = step
        g[i] = (fun(z + e) - fun(z - e)) / (2.0 * step)
    return g


def _output_var(y: np.ndarray) -> float:
    return float(np.var(y)) if y.size > 1 else 1.0


def _group_by_input(data: Dataset):
    """Average outputs over records sharing the same x (crossed designs)."""
    keys, inverse = np.unique(data.inputs, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    y = np.bincount(inverse, weights=data.outputs) / np.bincount(inverse)
    return keys, y


@dataclasses.dataclass(frozen=True)
class AlphaInit:
    weights: np.ndarray
    degenerate: bool


def init_alpha(data: Dataset, options: Optional[MleOptions] = None) -> AlphaInit:
    """Weights of a plain SE-kernel GP fitted on ``x -> y``, fidelity ignored.

    Used as the starting value of both ``alpha`` and ``gamma``.  Returns
    unit weights flagged ``degenerate`` when ``y`` has no spread.
    """
    if data.n < 3:
        raise StructuralError("init_alpha needs at least 3 records")
    x, y = _group_by_input(data)
    if np.var(y) <= 1e-14 * max(1.0, float(np.mean(y**2))) or x.shape[0] < 3:
        warnings.warn("degenerate outputs; using unit weights for initialisation", RuntimeWarning)
        return AlphaInit(np.ones(data.p), True)
    plain = Dataset(x, np.ones((x.shape[0], 1)), y)
    base = options or MleOptions()
    start = KernelParams(gamma=np.full(data.p, 2.0), sigma1_sq=float(np.var(y)))
    res = fit_mle(
        plain,
        EmulatorKind.HIGH_FIDELITY_GP,
        dataclasses.replace(base, restarts=max(3, base.restarts)),
        init=start,
    )
    return AlphaInit(res.params.gamma.copy(), False)


def initial_params(
    data: Dataset, model, fixed: Optional[dict] = None, options=None, scale_discrepancy: bool = True
) -> KernelParams:
    """Informed starting point: weights from :func:`init_alpha`, theta 1,
    ``sigma1^2 = var(y)`` and ``sigma2^2 = 0.1 var(y)``.

    With ``scale_discrepancy`` the 0.1 var(y) is applied to the discrepancy
    prior variance at the median training fidelity rather than to
    ``sigma2^2`` itself; the fidelity kernels are O(t^4) at their defaults,
    so the literal value starts the discrepancy switched off.
    """
    model = EmulatorKind(model)
    fixed = fixed or {}
    v = _output_var(data.outputs)
    if model is EmulatorKind.HIGH_FIDELITY_GP:
        w = np.full(data.p, 2.0)
    else:
        w = init_alpha(data, options).weights
    kw = dict(gamma=w, sigma1_sq=v)
    if model is EmulatorKind.STANDARD_GP or model.is_config:
        kw["theta"] = np.ones(data.q)
    if model.has_discrepancy:
        kw.update(alpha=w, sigma2_sq=0.1 * v)
        if scale_discrepancy:
            # 0.1 var(y) of prior discrepancy variance at the typical training fidelity
            probe = KernelParams(**kw, **fixed)
            kt = diagonal_covariance(model, probe.replace(sigma2_sq=1.0), data.inputs, data.fidelities)
            kt = float(np.median(kt - probe.sigma1_sq))
            if kt > 0:
                kw["sigma2_sq"] = float(np.clip(0.1 * v / kt, v / VARIANCE_SPAN, v * VARIANCE_SPAN))
    return KernelParams(**kw, **fixed)


def fit_mle(
    data: Dataset,
    model,
    options: Optional[MleOptions] = None,
    init: Optional[KernelParams] = None,
    basis: Optional[BasisSpec] = None,
    fixed: Optional[dict] = None,
) -> MleResult:
    """Maximise the profile log-likelihood over log-parameters.

    L-BFGS-B with central-difference gradients from ``options.restarts``
    starts: the informed start plus log-normal perturbations of it.
    ``fixed`` holds parameters that are not estimated (``l``, ``l_r``,
    ``twy_power``).
    """
    model = EmulatorKind(model)
    options = options or MleOptions()
    fixed = dict(fixed or {})
    if data.n == 0:
        raise StructuralError("cannot fit a model to an empty dataset")
    basis = basis or default_basis(model, data.p, data.q)
    if data.n < basis.m:
        raise BasisError(f"need at least {basis.m} records for a {basis.kind.value} basis")
    if init is None:
        init = initial_params(data, model, fixed, options)
    else:
        for k in ("l", "l_r", "twy_power"):
            fixed.setdefault(k, getattr(init, k))
    layout = Layout(model, data.p, data.q, _output_var(data.outputs), fixed)
    objective = ProfileObjective(data, model, basis, layout)
    z0 = layout.pack(init)
    rng = np.random.default_rng(options.seed)
    starts = [z0]
    for _ in range(options.restarts - 1):
        starts.append(np.clip(z0 + rng.normal(0.0, options.perturbation_sd, z0.size), layout.lower, layout.upper))

    init_ll = -objective(z0)
    step = options.gradient_step
    diagnostics = []
    best = None
    for z_start in starts:
        res = minimize(
            objective,
            z_start,
            jac=lambda z: central_gradient(objective, z, step),
            method="L-BFGS-B",
            bounds=layout.bounds(),
            options={"maxiter": options.max_iter, "ftol": options.tolerance, "gtol": 1e-6},
        )
        ll = -float(res.fun)
        # status 2 = line search could not improve: a precision-limited stationary point
        converged = bool(res.fun < PENALTY and res.status in (0, 2))
        diagnostics.append(RestartDiagnostic(z_start, ll, converged, int(res.nit), str(res.message)))
        if converged and (best is None or ll > best[0]):
            best = (ll, res.x)
    if best is None:
        raise EstimationError(f"no MLE restart converged for {model.value}", diagnostics)
    ll, z = best
    if init_ll > ll:
        ll, z = init_ll, z0
    _, beta, jitter = objective.log_likelihood(z)
    params = layout.unpack(z).replace(beta=beta)
    log.debug("%s: loglik %.4f after %d evaluations", model.value, ll, objective.evaluations)
    return MleResult(
        params=params,
        log_likelihood=ll,
        restarts=options.restarts,
        converged=[d.converged for d in diagnostics],
        initial_log_likelihood=init_ll,
        jitter=jitter,
        diagnostics=diagnostics,
        model=model,
        basis=basis,
    )
