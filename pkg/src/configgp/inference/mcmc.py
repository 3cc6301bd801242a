"""Fully Bayesian CONFIG (Kernel 2) via Metropolis-within-Gibbs.

Parametrisation: ``Sigma = sigma^2 * S`` with ``S = K_phi + lambda K_delta K_t``.
``beta`` and ``1/sigma^2`` have closed-form full conditionals; ``gamma``,
``alpha``, ``theta`` and ``lambda`` are updated block-wise by random-walk
Metropolis on log / logit coordinates.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import expit, logit

from ..errors import BasisError, SingularCovarianceError, StructuralError
from ..gp import BasisSpec, Dataset, GaussianProcess, cholesky_factor, default_basis
from ..kernels import EmulatorKind, KernelParams, PairwiseTerms
from .mle import init_alpha

log = logging.getLogger(__name__)

BLOCKS = ("gamma", "alpha", "theta", "lam")


@dataclasses.dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of the hierarchical prior.

    Gammas are (shape, rate).  ``1/sigma^2 | lambda ~ Gamma(a_sigma,
    (1 + lambda) b_sigma)``; ``lambda ~ Beta(a_lambda, b_lambda)``; Kernel 2
    weights ``theta ~ Beta(a_theta, b_theta)``; flat prior on ``beta``.

    The sampled blocks are truncated to a box: ``gamma`` and ``alpha`` to
    ``weight_bounds``, ``theta`` and ``lambda`` to ``[unit_margin, 1 -
    unit_margin]``.  With shapes of 0.001 the untruncated posteriors are
    nearly flat out to the numerical limits and chains never settle.
    """

    a_lambda: float = 1.0
    b_lambda: float = 1.0
    a_sigma: float = 0.001
    b_sigma: float = 0.001
    a_gamma: float = 0.001
    b_gamma: float = 0.001
    a_alpha: float = 0.001
    b_alpha: float = 0.001
    a_theta: float = 0.001
    b_theta: float = 0.001
    weight_bounds: Tuple[float, float] = (1e-3, 1e3)
    unit_margin: float = 1e-6

    def __post_init__(self):
        for f in dataclasses.fields(self)[:10]:
            if not getattr(self, f.name) > 0:
                raise StructuralError(f"prior hyperparameter {f.name} must be positive")
        lo, hi = self.weight_bounds
        if not 0 < lo < hi or not 0 < self.unit_margin < 0.5:
            raise StructuralError("invalid truncation box")

    def free_bounds(self, block: str) -> Tuple[float, float]:
        """Truncation box of a block on its transformed (log / logit) scale."""
        if block in ("theta", "lam"):
            m = float(logit(1.0 - self.unit_margin))
            return -m, m
        return math.log(self.weight_bounds[0]), math.log(self.weight_bounds[1])

    def sample(self, rng: np.random.Generator, p: int, q: int) -> dict:
        """One draw of the non-``beta`` parameters from the prior."""
        lam = rng.beta(self.a_lambda, self.b_lambda)
        tau = rng.gamma(self.a_sigma, 1.0 / ((1 + lam) * self.b_sigma))
        return dict(
            lam=lam,
            sigma_sq=1.0 / tau if tau > 0 else math.inf,
            gamma=rng.gamma(self.a_gamma, 1.0 / self.b_gamma, size=p),
            alpha=rng.gamma(self.a_alpha, 1.0 / self.b_alpha, size=p),
            theta=rng.beta(self.a_theta, self.b_theta, size=q),
        )


@dataclasses.dataclass(frozen=True)
class Schedule:
    iterations: int = 10000
    burn_in: int = 5000
    thinning: int = 50
    chains: int = 5
    seed: int = 0
    adapt_window: int = 100

    def __post_init__(self):
        if self.burn_in >= self.iterations:
            raise StructuralError("burn-in must be shorter than the run")
        if self.thinning < 1 or self.chains < 1 or self.burn_in < 0:
            raise StructuralError("invalid MCMC schedule")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thinning


@dataclasses.dataclass
class PosteriorChain:
    """Retained draws of one chain; array fields have one row per draw."""

    beta: np.ndarray
    sigma_sq: np.ndarray
    gamma: np.ndarray
    alpha: np.ndarray
    theta: np.ndarray
    lam: np.ndarray
    chain_id: int
    burn_in: int
    thinning: int
    acceptance: Dict[str, float]
    fixed: dict = dataclasses.field(default_factory=dict)

    def __len__(self) -> int:
        return self.sigma_sq.size

    def flat(self) -> Dict[str, np.ndarray]:
        """Scalar traces keyed ``beta[0]``, ``sigma_sq``, ``lambda``, ..."""
        out = {}
        for name in ("beta", "gamma", "alpha", "theta"):
            arr = getattr(self, name)
            for j in range(arr.shape[1]):
                out[f"{name}[{j}]"] = arr[:, j]
        out["sigma_sq"] = self.sigma_sq
        out["lambda"] = self.lam
        return out

    def params(self, i: int) -> KernelParams:
        return KernelParams.from_bayes(
            self.sigma_sq[i],
            self.lam[i],
            gamma=self.gamma[i],
            alpha=self.alpha[i],
            theta=self.theta[i],
            beta=self.beta[i],
            **self.fixed,
        )

    def collapsed(self, i: int = 0, size: Optional[int] = None) -> "PosteriorChain":
        """A chain repeating draw ``i``; handy for checking degenerate mixtures."""
        size = len(self) if size is None else size
        take = lambda a: np.repeat(a[i : i + 1], size, axis=0)
        return dataclasses.replace(
            self,
            beta=take(self.beta),
            sigma_sq=take(self.sigma_sq),
            gamma=take(self.gamma),
            alpha=take(self.alpha),
            theta=take(self.theta),
            lam=take(self.lam),
        )


class _Posterior:
    """Conditional densities for one dataset; holds cached distance arrays."""

    def __init__(self, data: Dataset, basis: BasisSpec, priors: PriorSpec, fixed: dict):
        self.data = data
        self.priors = priors
        self.fixed = fixed
        self.terms = PairwiseTerms(data.inputs, data.fidelities, data.inputs, data.fidelities)
        self.F = basis.evaluate(data.inputs, data.fidelities)
        self.y = data.outputs
        self.n = data.n

    def correlation_factor(self, gamma, alpha, theta, lam):
        params = KernelParams(
            gamma=gamma, alpha=alpha, theta=theta, sigma1_sq=1.0, sigma2_sq=lam, **self.fixed
        )
        return cholesky_factor(self.terms.covariance(EmulatorKind.CONFIG_K2, params))

    def quad(self, factor, beta) -> float:
        z = factor.half_solve(self.y - self.F @ beta)
        return float(z @ z)

    def log_target(self, state: dict, factor) -> float:
        """Log full conditional of (gamma, alpha, theta, lambda) on the
        transformed scale, up to a constant; includes the Jacobians."""
        pr = self.priors
        s2 = state["sigma_sq"]
        lam = state["lam"]
        ll = -0.5 * factor.log_det - 0.5 * self.quad(factor, state["beta"]) / s2
        g, a, th = state["gamma"], state["alpha"], state["theta"]
        lp = np.sum(pr.a_gamma * np.log(g) - pr.b_gamma * g)
        lp += np.sum(pr.a_alpha * np.log(a) - pr.b_alpha * a)
        lp += np.sum(pr.a_theta * np.log(th) + pr.b_theta * np.log1p(-th))
        lp += pr.a_lambda * math.log(lam) + pr.b_lambda * math.log1p(-lam)
        lp += pr.a_sigma * math.log1p(lam) - (1.0 + lam) * pr.b_sigma / s2
        return ll + float(lp)

    def draw_beta(self, factor, sigma_sq, rng):
        A = factor.half_solve(self.F)
        b = factor.half_solve(self.y)
        try:
            C = np.linalg.cholesky(A.T @ A)
        except np.linalg.LinAlgError as exc:
            raise BasisError("F^T S^-1 F is singular; use a smaller basis") from exc
        mean = cho_solve((C, True), A.T @ b)
        z = rng.standard_normal(mean.size)
        return mean + math.sqrt(sigma_sq) * solve_triangular(C.T, z, lower=False)

    def draw_sigma_sq(self, factor, beta, lam, rng):
        pr = self.priors
        shape = pr.a_sigma + 0.5 * self.n
        rate = (1.0 + lam) * pr.b_sigma + 0.5 * self.quad(factor, beta)
        return 1.0 / rng.gamma(shape, 1.0 / rate)


def _to_free(name, value):
    return logit(value) if name in ("theta", "lam") else np.log(value)


def _from_free(name, u):
    return expit(u) if name in ("theta", "lam") else np.exp(u)


def _initial_state(post: _Posterior, rng, weights: np.ndarray) -> dict:
    """Overdispersed random start around the informed weight estimate."""
    p, q = post.data.p, post.data.q
    v = float(np.var(post.y))
    lo, hi = post.priors.weight_bounds
    w = np.clip(weights, lo, hi)
    jitter = lambda: np.clip(w * np.exp(rng.normal(0, 1, p)), lo, hi)
    return dict(
        gamma=jitter(),
        alpha=jitter(),
        theta=rng.uniform(0.05, 0.95, q),
        lam=float(rng.uniform(0.05, 0.95)),
        sigma_sq=v * float(np.exp(rng.normal(0, 1))),
        beta=None,
    )


def random_walk_step(u, current, log_density, scale, bounds, rng, shape=None):
    """One random-walk Metropolis step on a box-truncated target.

    Parameters
    ----------
    u : ndarray
        Current point on the transformed scale.
    current : float
        Log density at ``u``.
    log_density : callable
        ``u -> (value, aux)``.  A :class:`SingularCovarianceError` counts as
        zero density.
    scale : float
        Proposal standard deviation multiplier.
    bounds : (float, float)
        The box; proposals outside it are rejected.
    rng : numpy.random.Generator
    shape : ndarray, optional
        Lower-triangular proposal shape, identity by default.

    Returns
    -------
    (u, value, accepted, aux)
        ``aux`` is None when the proposal was rejected.
    """
    z = rng.standard_normal(u.size)
    u_new = u + scale * (z if shape is None else shape @ z)
    if np.any(u_new < bounds[0]) or np.any(u_new > bounds[1]):
        return u, current, False, None
    try:
        value, aux = log_density(u_new)
    except SingularCovarianceError:
        return u, current, False, None
    if np.isfinite(value) and math.log(rng.random()) < value - current:
        return u_new, value, True, aux
    return u, current, False, None


def _proposal_shape(trace: np.ndarray) -> np.ndarray:
    cov = np.cov(trace, rowvar=False)
    d = cov.shape[0]
    scale = float(np.mean(np.diag(cov)))
    if not scale > 0:
        return np.eye(d)
    try:
        return np.linalg.cholesky(cov / scale + 1e-6 * np.eye(d))
    except np.linalg.LinAlgError:
        return np.eye(d)


def _run_chain(post: _Posterior, schedule: Schedule, chain_id: int, seed_seq, weights) -> PosteriorChain:
    rng = np.random.default_rng(seed_seq)
    for _ in range(100):
        state = _initial_state(post, rng, weights)
        try:
            factor = post.correlation_factor(state["gamma"], state["alpha"], state["theta"], state["lam"])
            break
        except SingularCovarianceError:
            continue
    else:
        raise SingularCovarianceError("could not find a factorable starting point")

    dims = {"gamma": post.data.p, "alpha": post.data.p, "theta": post.data.q, "lam": 1}
    scale = {b: 0.5 / math.sqrt(dims[b]) for b in BLOCKS}
    box = {b: post.priors.free_bounds(b) for b in BLOCKS}
    max_scale = {b: box[b][1] - box[b][0] for b in BLOCKS}
    # proposal shape per block, normalised to unit mean variance; learned in
    # the second half of burn-in from the block's own trajectory
    shape = {b: np.eye(dims[b]) for b in BLOCKS}
    history = {b: [] for b in BLOCKS}
    window_acc = {b: 0 for b in BLOCKS}
    total_acc = {b: 0 for b in BLOCKS}
    post_burn = 0
    keep = {k: [] for k in ("beta", "sigma_sq", "gamma", "alpha", "theta", "lam")}

    for it in range(1, schedule.iterations + 1):
        state["beta"] = post.draw_beta(factor, state["sigma_sq"], rng)
        state["sigma_sq"] = post.draw_sigma_sq(factor, state["beta"], state["lam"], rng)
        current = post.log_target(state, factor)
        for block in BLOCKS:
            u = np.atleast_1d(_to_free(block, state[block]))
            if it <= schedule.burn_in:
                history[block].append(u)

            def density(u_new, block=block):
                proposal = dict(state)
                value = _from_free(block, u_new)
                proposal[block] = float(value[0]) if block == "lam" else value
                new_factor = post.correlation_factor(
                    proposal["gamma"], proposal["alpha"], proposal["theta"], proposal["lam"]
                )
                return post.log_target(proposal, new_factor), (proposal, new_factor)

            _, value, accepted, aux = random_walk_step(
                u, current, density, scale[block], box[block], rng, shape[block]
            )
            if accepted:
                (state, factor), current = aux, value
                window_acc[block] += 1
                if it > schedule.burn_in:
                    total_acc[block] += 1
        if it <= schedule.burn_in and it % schedule.adapt_window == 0:
            for block in BLOCKS:
                rate = window_acc[block] / schedule.adapt_window
                if rate > 0.5:
                    scale[block] = min(scale[block] * 1.1, max_scale[block])
                elif rate < 0.2:
                    scale[block] *= 0.9
                window_acc[block] = 0
                if dims[block] > 1 and it >= schedule.burn_in // 2 and len(history[block]) >= 200:
                    shape[block] = _proposal_shape(np.array(history[block][len(history[block]) // 2 :]))
        if it > schedule.burn_in:
            post_burn += 1
            if (it - schedule.burn_in) % schedule.thinning == 0:
                for k in keep:
                    keep[k].append(np.copy(state[k]))

    acceptance = {b: total_acc[b] / max(post_burn, 1) for b in BLOCKS}
    log.debug("chain %d acceptance %s", chain_id, acceptance)
    return PosteriorChain(
        beta=np.array(keep["beta"]),
        sigma_sq=np.array(keep["sigma_sq"], dtype=float),
        gamma=np.array(keep["gamma"]),
        alpha=np.array(keep["alpha"]),
        theta=np.array(keep["theta"]),
        lam=np.array(keep["lam"], dtype=float),
        chain_id=chain_id,
        burn_in=schedule.burn_in,
        thinning=schedule.thinning,
        acceptance=acceptance,
        fixed=dict(post.fixed),
    )


def run_mwg(
    data: Dataset,
    model=EmulatorKind.CONFIG_K2,
    priors: Optional[PriorSpec] = None,
    schedule: Optional[Schedule] = None,
    basis: Optional[BasisSpec] = None,
    fixed: Optional[dict] = None,
) -> List[PosteriorChain]:
    """Run independent Metropolis-within-Gibbs chains for CONFIG Kernel 2.

    Each iteration draws ``beta`` and ``1/sigma^2`` from their full
    conditionals, then makes one random-walk Metropolis step per block of
    ``gamma``, ``alpha``, ``theta`` and ``lambda``.  Proposal scales adapt
    during burn-in only.  ``fixed`` may carry the exponents ``l`` and
    ``l_r``.
    """
    model = EmulatorKind(model)
    if model is not EmulatorKind.CONFIG_K2:
        raise StructuralError("fully Bayesian inference is only supported for config-k2")
    if data.n == 0:
        raise StructuralError("run_mwg needs at least one training record")
    if data.q < 1:
        raise StructuralError("config-k2 needs fidelity columns")
    priors = priors or PriorSpec()
    schedule = schedule or Schedule()
    basis = basis or default_basis(model, data.p, data.q)
    fixed = {k: v for k, v in (fixed or {}).items() if k in ("l", "l_r")}
    post = _Posterior(data, basis, priors, fixed)
    weights = init_alpha(data).weights if data.n >= 3 else np.ones(data.p)
    seeds = np.random.SeedSequence(schedule.seed).spawn(schedule.chains)
    return [_run_chain(post, schedule, i, s, weights) for i, s in enumerate(seeds)]


class PSRF(NamedTuple):
    value: float
    degenerate: bool


def gelman_rubin(chains: Sequence, param: Optional[str] = None) -> PSRF:
    """Potential scale reduction factor for one scalar parameter.

    ``chains`` is a sequence of :class:`PosteriorChain` (select with
    ``param``, a key of :meth:`PosteriorChain.flat`) or of 1-D traces.
    """
    if len(chains) < 2:
        raise StructuralError("the Gelman-Rubin statistic needs at least two chains")
    if param is not None:
        traces = [c.flat()[param] for c in chains]
    else:
        traces = chains
    X = np.array([np.asarray(t, dtype=float) for t in traces])
    if X.ndim != 2:
        raise StructuralError("chains must have equal lengths")
    m, L = X.shape
    if L < 10:
        raise StructuralError("need at least 10 retained draws per chain")
    W = float(np.mean(np.var(X, axis=1, ddof=1)))
    B = L * float(np.var(X.mean(axis=1), ddof=1))
    if W <= 0:
        return PSRF(math.inf, True)
    return PSRF(math.sqrt(((L - 1) / L * W + B / L) / W), False)


def gelman_rubin_all(chains: Sequence[PosteriorChain]) -> Dict[str, PSRF]:
    return {name: gelman_rubin(chains, name) for name in chains[0].flat()}


def hpd_interval(samples: np.ndarray, mass: float = 0.95):
    """Shortest intervals containing ``mass`` of the samples along the last axis."""
    s = np.sort(np.asarray(samples, dtype=float), axis=-1)
    N = s.shape[-1]
    k = int(math.ceil(mass * N))
    widths = s[..., k - 1 :] - s[..., : N - k + 1]
    i = np.argmin(widths, axis=-1)
    lo = np.take_along_axis(s, i[..., None], axis=-1)[..., 0]
    hi = np.take_along_axis(s, (i + k - 1)[..., None], axis=-1)[..., 0]
    return lo, hi


@dataclasses.dataclass
class PosteriorPrediction:
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    conditional_means: np.ndarray
    conditional_variances: np.ndarray
    samples: Optional[np.ndarray] = None

    @property
    def pooled_variance(self) -> np.ndarray:
        return self.samples.var(axis=1) if self.samples is not None else None


def posterior_predict(
    data: Dataset,
    chains: Sequence[PosteriorChain],
    x_star,
    draws_per_sample: int = 10,
    seed=0,
    basis: Optional[BasisSpec] = None,
    keep_samples: bool = False,
) -> PosteriorPrediction:
    """Posterior predictive of ``eta(x*, 0)`` pooled over all retained draws.

    For each draw the conditional GP predictive (with that draw's ``beta``)
    is sampled ``draws_per_sample`` times.  Reports the pooled sample mean
    and the 95% highest-density interval.
    """
    if not chains or sum(len(c) for c in chains) == 0:
        raise StructuralError("no posterior draws")
    X = np.atleast_2d(np.asarray(x_star, dtype=float))
    basis = basis or default_basis(EmulatorKind.CONFIG_K2, data.p, data.q)
    rng = np.random.default_rng(seed)
    terms = PairwiseTerms(data.inputs, data.fidelities, data.inputs, data.fidelities)
    means, variances, pooled = [], [], []
    for chain in chains:
        for i in range(len(chain)):
            gp = GaussianProcess(data, chain.params(i), EmulatorKind.CONFIG_K2, basis, terms=terms)
            mu, var = gp.predict_arrays(X, uq="plug-in")
            means.append(mu)
            variances.append(var)
            pooled.append(mu[:, None] + np.sqrt(var)[:, None] * rng.standard_normal((X.shape[0], draws_per_sample)))
    samples = np.concatenate(pooled, axis=1)
    lo, hi = hpd_interval(samples)
    return PosteriorPrediction(
        mean=samples.mean(axis=1),
        lower=lo,
        upper=hi,
        conditional_means=np.array(means).T,
        conditional_variances=np.array(variances).T,
        samples=samples if keep_samples else None,
    )
