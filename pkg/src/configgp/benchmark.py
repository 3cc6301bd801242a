"""Replicated emulator comparisons on the synthetic test functions.

Every random quantity of a replication is drawn from a generator derived
from ``(master seed, replication, stream)``, so results do not depend on
the order of the model list or on how replications are scheduled.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np

from .design import map_ranges, maxpro
from .errors import ConfigGPError, StructuralError
from .gp import Dataset, GaussianProcess, Z95
from .inference.mcmc import PriorSpec, Schedule, gelman_rubin_all, posterior_predict, run_mwg
from .inference.mle import MleOptions, fit_mle
from .kernels import EmulatorKind
from .testbed import get_function, simulate

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
GR_THRESHOLD = 1.2

# canonical order; a model's random stream is keyed by its position here
MODEL_ORDER = tuple(EmulatorKind)
MULTI_FIDELITY_MODELS = (
    EmulatorKind.STANDARD_GP,
    EmulatorKind.TWY_ARITH,
    EmulatorKind.TWY_GEOM,
    EmulatorKind.CONFIG_K1,
    EmulatorKind.CONFIG_K2,
)
DEFAULT_FIDELITY_RANGE = {"currin": (0.1, 0.4), "park": (0.2, 0.5)}

# stream ids inside a replication
_DESIGN, _TEST, _HF_DESIGN, _MODEL0 = 0, 1, 2, 10


def load_schema() -> dict:
    text = resources.files("configgp").joinpath("schemas/experiment.schema.json").read_text()
    return json.loads(text)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark or MCMC comparison; defaults follow the standard protocol."""

    test_function: str = "currin"
    n: int = 50
    fidelity_range: Optional[Tuple[float, float]] = None
    n_test: int = 1000
    replications: int = 20
    models: Tuple[str, ...] = tuple(m.value for m in MULTI_FIDELITY_MODELS)
    l: float = 2.0
    l_r: Optional[Tuple[float, ...]] = None
    twy_power: float = 4.0
    inference: str = "mle"
    uq: str = "basis-adjusted"
    restarts: int = 5
    high_fidelity_t: float = 0.0125
    high_fidelity_n: Optional[int] = None
    mcmc_iterations: int = 10000
    mcmc_burn_in: int = 5000
    mcmc_thinning: int = 50
    mcmc_chains: int = 5
    draws_per_sample: int = 10
    mcmc_split: int = 0
    seed: int = 0

    def __post_init__(self):
        fn = get_function(self.test_function)
        if self.fidelity_range is None:
            object.__setattr__(self, "fidelity_range", DEFAULT_FIDELITY_RANGE[fn.name])
        lo, hi = self.fidelity_range
        if not 0 < lo < hi <= 1:
            raise StructuralError(f"fidelity range must satisfy 0 < lo < hi <= 1, got {self.fidelity_range}")
        if not self.models:
            raise StructuralError("model list must not be empty")
        object.__setattr__(self, "models", tuple(EmulatorKind(m).value for m in self.models))
        if self.l_r is not None:
            if len(self.l_r) != fn.p:
                raise StructuralError(f"l_r needs {fn.p} entries")
            object.__setattr__(self, "l_r", tuple(float(v) for v in self.l_r))

    @property
    def p(self) -> int:
        return get_function(self.test_function).p

    @property
    def q(self) -> int:
        return self.p

    @property
    def fixed(self) -> dict:
        return {"l": self.l, "l_r": None if self.l_r is None else np.array(self.l_r), "twy_power": self.twy_power}

    @property
    def schedule(self) -> Schedule:
        return Schedule(self.mcmc_iterations, self.mcmc_burn_in, self.mcmc_thinning, self.mcmc_chains, self.seed)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        """Validate against the shipped JSON schema, then build."""
        try:
            jsonschema.validate(raw, load_schema())
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise StructuralError(f"invalid config at {path}: {exc.message}") from None
        kw = {k: v for k, v in raw.items() if k not in ("schema_version", "high_fidelity", "mcmc")}
        if "fidelity_range" in kw:
            kw["fidelity_range"] = tuple(kw["fidelity_range"])
        if "models" in kw:
            kw["models"] = tuple(kw["models"])
        if kw.get("l_r") is not None:
            kw["l_r"] = tuple(kw["l_r"])
        hf = raw.get("high_fidelity", {})
        if "t" in hf:
            kw["high_fidelity_t"] = hf["t"]
        if "n" in hf:
            kw["high_fidelity_n"] = hf["n"]
        for k, v in raw.get("mcmc", {}).items():
            kw["draws_per_sample" if k == "draws_per_sample" else f"mcmc_{k}"] = v
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "test_function": self.test_function,
            "n": self.n,
            "fidelity_range": list(self.fidelity_range),
            "n_test": self.n_test,
            "replications": self.replications,
            "models": list(self.models),
            "l": self.l,
            "l_r": None if self.l_r is None else list(self.l_r),
            "twy_power": self.twy_power,
            "inference": self.inference,
            "uq": self.uq,
            "restarts": self.restarts,
            "high_fidelity": {"t": self.high_fidelity_t, "n": self.high_fidelity_size},
            "mcmc": {
                "iterations": self.mcmc_iterations,
                "burn_in": self.mcmc_burn_in,
                "thinning": self.mcmc_thinning,
                "chains": self.mcmc_chains,
                "draws_per_sample": self.draws_per_sample,
                "split": self.mcmc_split,
            },
            "seed": self.seed,
        }

    @property
    def high_fidelity_size(self) -> int:
        return self.high_fidelity_n or 5 * self.p


def stream(seed: int, replication: int, stream_id: int) -> np.random.SeedSequence:
    """Counter-based child seed for one random stream of one replication."""
    return np.random.SeedSequence(seed, spawn_key=(replication, stream_id))


def _int_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1)[0])


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class Metrics:
    mse: float
    coverage: float
    avg_se: float


def score(mean, truth, lower, upper, sd) -> Metrics:
    """MSE, interval coverage and average standard error over test points."""
    mean, truth = np.asarray(mean, float), np.asarray(truth, float)
    inside = (np.asarray(lower) <= truth) & (truth <= np.asarray(upper))
    return Metrics(
        mse=float(np.mean((mean - truth) ** 2)),
        coverage=float(np.mean(inside)),
        avg_se=float(np.mean(sd)),
    )


def gaussian_score(mean, variance, truth) -> Metrics:
    sd = np.sqrt(np.asarray(variance, float))
    return score(mean, truth, mean - Z95 * sd, mean + Z95 * sd, sd)


# ---------------------------------------------------------------------------
# One replication
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class Split:
    """Training data and test set of one replication."""

    data: Dataset
    X_test: np.ndarray
    y_test: np.ndarray
    config: ExperimentConfig
    replication: int
    _hf: Optional[Dataset] = None

    @property
    def high_fidelity_data(self) -> Dataset:
        """Small design simulated at a fine fidelity, for the high-fidelity baseline."""
        if self._hf is None:
            cfg = self.config
            seed = stream(cfg.seed, self.replication, _HF_DESIGN)
            D = maxpro(cfg.high_fidelity_size, cfg.p, seed=seed, proposals=2000)
            T = np.full((D.n, cfg.q), cfg.high_fidelity_t)
            self._hf = Dataset(D.points, T, simulate(cfg.test_function, D.points, T))
        return self._hf


def make_split(config: ExperimentConfig, replication: int) -> Split:
    f = get_function(config.test_function)
    p, q = config.p, config.q
    D = maxpro(config.n, p + q, seed=stream(config.seed, replication, _DESIGN), n_inputs=p)
    D = map_ranges(D, [(0.0, 1.0)] * p + [tuple(config.fidelity_range)] * q)
    data = Dataset(D.inputs, D.fidelities, simulate(f, D.inputs, D.fidelities))
    rng = np.random.default_rng(stream(config.seed, replication, _TEST))
    X_test = rng.random((config.n_test, p))
    return Split(data, X_test, f(X_test), config, replication)


@dataclasses.dataclass
class ModelOutcome:
    replication: int
    model: str
    status: str
    mse: float = math.nan
    coverage: float = math.nan
    avg_se: float = math.nan
    jitter: float = math.nan
    log_likelihood: float = math.nan
    fit_seconds: float = math.nan
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def fit_and_score_mle(split: Split, model: EmulatorKind, seed) -> Tuple[Metrics, float, float]:
    cfg = split.config
    data = split.high_fidelity_data if model is EmulatorKind.HIGH_FIDELITY_GP else split.data
    fixed = {k: v for k, v in cfg.fixed.items() if v is not None}
    result = fit_mle(data, model, MleOptions(restarts=cfg.restarts, seed=seed), fixed=fixed)
    gp = GaussianProcess(data, result.params, model, result.basis)
    mean, var = gp.predict_arrays(split.X_test, uq=cfg.uq)
    return gaussian_score(mean, var, split.y_test), gp.jitter, result.log_likelihood


def _bayes_score(split: Split, seed) -> Tuple[Metrics, dict, List]:
    cfg = split.config
    fixed = {"l": cfg.l}
    if cfg.l_r is not None:
        fixed["l_r"] = np.array(cfg.l_r)
    schedule = dataclasses.replace(cfg.schedule, seed=seed)
    chains = run_mwg(split.data, EmulatorKind.CONFIG_K2, PriorSpec(), schedule, fixed=fixed)
    pred = posterior_predict(split.data, chains, split.X_test, cfg.draws_per_sample, seed=seed)
    sd = np.sqrt(np.mean(pred.conditional_variances, axis=1) + np.var(pred.conditional_means, axis=1))
    metrics = score(pred.mean, split.y_test, pred.lower, pred.upper, sd)
    return metrics, gelman_rubin_all(chains), chains


def run_model(split: Split, model) -> ModelOutcome:
    """Fit and score one model; failures become a ``failed`` outcome."""
    model = EmulatorKind(model)
    cfg = split.config
    seed = _int_seed(stream(cfg.seed, split.replication, _MODEL0 + MODEL_ORDER.index(model)))
    start = time.perf_counter()
    try:
        if cfg.inference == "bayes" and model is EmulatorKind.CONFIG_K2:
            metrics, _, _ = _bayes_score(split, seed)
            jitter = ll = math.nan
        else:
            metrics, jitter, ll = fit_and_score_mle(split, model, seed)
    except (ConfigGPError, np.linalg.LinAlgError) as exc:
        log.warning("replication %d, %s failed: %s", split.replication, model.value, exc)
        return ModelOutcome(split.replication, model.value, "failed", error=str(exc),
                            fit_seconds=time.perf_counter() - start)
    return ModelOutcome(
        split.replication,
        model.value,
        "ok",
        mse=metrics.mse,
        coverage=metrics.coverage,
        avg_se=metrics.avg_se,
        jitter=jitter,
        log_likelihood=ll,
        fit_seconds=time.perf_counter() - start,
    )


def run_replication(config: ExperimentConfig, replication: int) -> List[ModelOutcome]:
    split = make_split(config, replication)
    return [run_model(split, m) for m in config.models]


# ---------------------------------------------------------------------------
# Whole benchmark
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class BenchmarkResult:
    config: ExperimentConfig
    outcomes: List[ModelOutcome]

    def for_model(self, model) -> List[ModelOutcome]:
        name = EmulatorKind(model).value
        return [o for o in self.outcomes if o.model == name]

    def aggregate(self) -> Dict[str, dict]:
        """Arithmetic means over successful replications, per model."""
        out = {}
        for name in self.config.models:
            rows = self.for_model(name)
            ok = [o for o in rows if o.ok]
            mean = lambda attr: float(np.mean([getattr(o, attr) for o in ok])) if ok else None
            out[name] = {
                "mse": mean("mse"),
                "coverage": mean("coverage"),
                "avg_se": mean("avg_se"),
                "replications_ok": len(ok),
                "replications_failed": len(rows) - len(ok),
            }
            if name == EmulatorKind.HIGH_FIDELITY_GP.value:
                out[name]["note"] = (
                    f"trained on {self.config.high_fidelity_size} runs at fidelity "
                    f"{self.config.high_fidelity_t} per dimension"
                )
        return out

    def failures(self) -> List[dict]:
        return [
            {"replication": o.replication, "model": o.model, "error": o.error}
            for o in self.outcomes
            if not o.ok
        ]

    def write(self, out_dir) -> Dict[str, Path]:
        """Write ``replications.csv``, ``timings.csv`` and ``summary.json``.

        Wall-clock times live only in ``timings.csv`` and the timestamp only
        in ``summary.json``, so the remaining content is reproducible.
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "replications": out / "replications.csv",
            "timings": out / "timings.csv",
            "summary": out / "summary.json",
        }
        fields = ["replication", "model", "status", "mse", "coverage", "avg_se", "jitter", "log_likelihood", "error"]
        with open(paths["replications"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(fields)
            for o in self.outcomes:
                w.writerow([_fmt(getattr(o, f)) for f in fields])
        with open(paths["timings"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replication", "model", "fit_seconds"])
            for o in self.outcomes:
                w.writerow([o.replication, o.model, _fmt(o.fit_seconds)])
        summary = {
            "schema_version": SCHEMA_VERSION,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "config": self.config.to_dict(),
            "aggregate": self.aggregate(),
            "failures": self.failures(),
        }
        paths["summary"].write_text(json.dumps(summary, indent=2, allow_nan=False) + "\n")
        return paths


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def run_benchmark(config: ExperimentConfig, threads: int = 1) -> BenchmarkResult:
    """Run every replication; parallel over replications when ``threads > 1``."""
    reps = range(config.replications)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_replication, [config] * len(reps), reps))
    else:
        parts = []
        for r in reps:
            parts.append(run_replication(config, r))
            log.info("replication %d done", r)
    outcomes = [o for part in parts for o in part]
    outcomes.sort(key=lambda o: (o.replication, config.models.index(o.model)))
    return BenchmarkResult(config, outcomes)


# ---------------------------------------------------------------------------
# MLE vs fully Bayesian comparison
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class ComparisonReport:
    mle: Metrics
    bayes: Metrics
    gelman_rubin: Dict[str, float]
    acceptance: List[Dict[str, float]]
    config: ExperimentConfig
    posterior_medians: Dict[str, float] = dataclasses.field(default_factory=dict)

    @property
    def unconverged(self) -> List[str]:
        return sorted(k for k, v in self.gelman_rubin.items() if not v < GR_THRESHOLD)

    @property
    def converged(self) -> bool:
        return not self.unconverged

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "config": self.config.to_dict(),
            "mle": dataclasses.asdict(self.mle),
            "bayes": dataclasses.asdict(self.bayes),
            "gelman_rubin": {k: (v if math.isfinite(v) else None) for k, v in self.gelman_rubin.items()},
            "threshold": GR_THRESHOLD,
            "unconverged": self.unconverged,
            "acceptance": self.acceptance,
            "posterior_medians": self.posterior_medians,
        }


def mcmc_compare(config: ExperimentConfig) -> ComparisonReport:
    """Plug-in MLE versus fully Bayesian Kernel 2 on one training/test split."""
    split = make_split(config, config.mcmc_split)
    model = EmulatorKind.CONFIG_K2
    seed = _int_seed(stream(config.seed, config.mcmc_split, _MODEL0 + MODEL_ORDER.index(model)))
    mle, _, _ = fit_and_score_mle(split, model, seed)
    bayes, psrf, chains = _bayes_score(split, seed)
    return ComparisonReport(
        mle=mle,
        bayes=bayes,
        gelman_rubin={k: v.value for k, v in psrf.items()},
        acceptance=[c.acceptance for c in chains],
        config=config,
        posterior_medians={
            k: float(np.median(np.concatenate([c.flat()[k] for c in chains]))) for k in chains[0].flat()
        },
    )
