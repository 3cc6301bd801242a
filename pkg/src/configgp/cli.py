"""Command-line interface: ``configgp <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import design as dsg
from .benchmark import ExperimentConfig, mcmc_compare, run_benchmark
from .errors import ConfigGPError, StructuralError
from .gp import BasisKind, BasisSpec, Dataset, GaussianProcess, Z95
from .inference.mle import MleOptions, fit_mle
from .kernels import EmulatorKind, KernelParams, kernel1_t, kernel2_t, twy_t
from .testbed import TEST_FUNCTIONS, get_function, simulate

log = logging.getLogger("configgp")

MODEL_FORMAT = "configgp-fitted-model"
MODEL_FORMAT_VERSION = 1
KERNELS = ("kernel1", "kernel2", "twy")
GLOBAL_DEFAULTS = {"seed": None, "config": None, "out_dir": ".", "threads": 1, "verbose": False}


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------


def _read_table(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise StructuralError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    try:
        values = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise StructuralError(f"{path}: non-numeric or ragged rows ({exc})") from None
    return header, values


def _columns(header, prefix):
    idx = [i for i, h in enumerate(header) if h.startswith(prefix) and h[len(prefix):].isdigit()]
    return sorted(idx, key=lambda i: int(header[i][len(prefix):]))


def read_dataset(path, p: Optional[int] = None, q: Optional[int] = None) -> Dataset:
    """Dataset CSV with header ``x1..xp,t1..tq,y``."""
    header, values = _read_table(path)
    xi, ti = _columns(header, "x"), _columns(header, "t")
    if "y" not in header:
        raise StructuralError(f"{path}: missing 'y' column")
    if p is not None and len(xi) != p:
        raise StructuralError(f"{path}: expected {p} input columns, found {len(xi)}")
    if q is not None and len(ti) != q:
        raise StructuralError(f"{path}: expected {q} fidelity columns, found {len(ti)}")
    return Dataset(values[:, xi], values[:, ti], values[:, header.index("y")])


def write_dataset(path, data: Dataset) -> None:
    header = [f"x{i + 1}" for i in range(data.p)] + [f"t{i + 1}" for i in range(data.q)] + ["y"]
    rows = np.column_stack([data.inputs, data.fidelities, data.outputs])
    _write_rows(path, header, rows)


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# Fitted-model files
# ---------------------------------------------------------------------------


def model_to_json(model: EmulatorKind, basis: BasisSpec, params: KernelParams, data: Dataset, jitter, loglik) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "kind": model.value,
        "basis": {"kind": basis.kind.value, "p": basis.p, "q": basis.q},
        "params": params.to_dict(),
        "fingerprint": data.fingerprint(),
        "jitter": jitter,
        "log_likelihood": loglik,
        "p": data.p,
        "q": data.q,
    }


def load_model(path, data: Dataset) -> GaussianProcess:
    """Rebuild a fitted GP; refuses data that does not match the fingerprint."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise StructuralError(f"{path} is not a fitted-model file")
    if doc["fingerprint"] != data.fingerprint():
        raise StructuralError(
            f"training data does not match the data {path} was fitted on "
            f"(fingerprint {doc['fingerprint'][:12]}..., supplied {data.fingerprint()[:12]}...); "
            "pass the original training CSV"
        )
    b = doc["basis"]
    basis = BasisSpec(BasisKind(b["kind"]), b["p"], b["q"])
    return GaussianProcess(data, KernelParams.from_dict(doc["params"]), EmulatorKind(doc["kind"]), basis)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _parse_ranges(text: Optional[str], d: int):
    if not text:
        return [(0.0, 1.0)] * d
    parts = [tuple(float(v) for v in chunk.split(":")) for chunk in text.split(",")]
    if len(parts) == 1:
        parts = parts * d
    if len(parts) != d or any(len(r) != 2 for r in parts):
        raise StructuralError(f"--ranges needs {d} 'lo:hi' pairs")
    return parts


def _out_path(args, name):
    if getattr(args, "out", None):
        return Path(args.out)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _seed(args) -> int:
    return 0 if args.seed is None else args.seed


def cmd_design(args) -> int:
    n_inputs = args.d if args.inputs is None else args.inputs
    if args.kind == "maxpro":
        D = dsg.maxpro(args.n, args.d, seed=_seed(args), proposals=args.iterations, n_inputs=n_inputs)
    elif args.kind == "maximin":
        D = dsg.maximin_lhd(args.n, args.d, seed=_seed(args), iterations=args.iterations, n_inputs=n_inputs)
    else:
        D = dsg.unit_design(dsg.random_lhd(args.n, args.d, np.random.default_rng(_seed(args))), n_inputs, "lhd")
    D = dsg.map_ranges(D, _parse_ranges(args.ranges, args.d))
    if args.cross:
        other = dsg.read_csv(args.cross)
        D = dsg.crossed_array(D, other, mode=args.cross_mode, seed=_seed(args))
    path = _out_path(args, "design.csv")
    dsg.write_csv(D, path)
    print(f"wrote {D.n} x {D.d} {D.provenance} design to {path}")
    return 0


def cmd_simulate(args) -> int:
    f = get_function(args.function)
    D = dsg.read_csv(args.design)
    X, T = D.inputs, D.fidelities
    if X.shape[1] != f.p:
        raise StructuralError(f"{args.function} takes {f.p} inputs, design has {X.shape[1]}")
    if T.shape[1] != f.p:
        raise StructuralError(f"the grid simulator needs one fidelity column per input ({f.p}), design has {T.shape[1]}")
    data = Dataset(X, T, simulate(f, X, T))
    path = _out_path(args, "data.csv")
    write_dataset(path, data)
    print(f"wrote {data.n} simulated {f.name} runs to {path}")
    return 0


def cmd_fit(args) -> int:
    data = read_dataset(args.data, args.p, args.q)
    model = EmulatorKind(args.model)
    basis = BasisSpec(BasisKind(args.basis), data.p, data.q) if args.basis else None
    fixed = {"l": args.l, "twy_power": args.twy_power}
    if args.l_r:
        fixed["l_r"] = np.array(args.l_r, dtype=float)
    result = fit_mle(data, model, MleOptions(restarts=args.restarts, seed=_seed(args)), basis=basis, fixed=fixed)
    doc = model_to_json(model, result.basis, result.params, data, result.jitter, result.log_likelihood)
    path = _out_path(args, "model.json")
    path.write_text(json.dumps(doc, indent=2) + "\n")
    print(f"fitted {model.value}: log-likelihood {result.log_likelihood:.6g}, jitter {result.jitter:g}; wrote {path}")
    return 0


def predict_table(gp: GaussianProcess, header, values, uq: str):
    xi, ti = _columns(header, "x"), _columns(header, "t")
    if len(xi) != gp.data.p:
        raise StructuralError(f"test inputs need {gp.data.p} x-columns, found {len(xi)}")
    # contiguous copies keep BLAS results bit-identical to in-memory calls
    X = np.ascontiguousarray(values[:, xi])
    T = np.ascontiguousarray(values[:, ti]) if ti else None
    mean, var = gp.predict_arrays(X, T, uq=uq)
    sd = np.sqrt(var)
    out_header = [header[i] for i in xi] + [header[i] for i in ti] + ["mean", "variance", "lo95", "hi95"]
    rows = np.column_stack([values[:, xi + ti], mean, var, mean - Z95 * sd, mean + Z95 * sd])
    return out_header, rows


def cmd_predict(args) -> int:
    data = read_dataset(args.data)
    gp = load_model(args.model_file, data)
    header, values = _read_table(args.inputs)
    out_header, rows = predict_table(gp, header, values, args.uq)
    path = _out_path(args, "predictions.csv")
    _write_rows(path, out_header, rows)
    print(f"wrote {rows.shape[0]} predictions to {path}")
    return 0


def kernel_grid(kernel: str, theta: float, resolution: int, l: float = 2.0, l_r: float = 2.0):
    """``(t1, t2, K)`` triples of a single-fidelity kernel on a uniform lattice over [0, 1]^2."""
    if kernel not in KERNELS:
        raise StructuralError(f"unknown kernel {kernel!r}; choose from {KERNELS}")
    if resolution < 2:
        raise StructuralError("resolution must be at least 2")
    grid = np.linspace(0.0, 1.0, resolution)
    th = np.array([theta])
    rows = []
    for a in grid:
        for b in grid:
            t1, t2 = np.array([a]), np.array([b])
            if kernel == "kernel1":
                k = kernel1_t(t1, t2, th)
            elif kernel == "kernel2":
                k = kernel2_t(t1, t2, th, np.array([l_r]), l)
            else:
                k = twy_t(a, b, l)
            rows.append((a, b, k))
    return np.array(rows)


def cmd_kernelgrid(args) -> int:
    rows = kernel_grid(args.kernel, args.theta, args.resolution, args.l, args.l_r)
    path = _out_path(args, f"kernelgrid_{args.kernel}.csv")
    _write_rows(path, ["t1", "t2", "K"], rows)
    print(f"wrote {rows.shape[0]} grid values to {path}")
    return 0


def _experiment_config(args) -> ExperimentConfig:
    if not args.config:
        raise StructuralError(f"{args.command} needs --config")
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    return cfg


def cmd_benchmark(args) -> int:
    cfg = _experiment_config(args)
    result = run_benchmark(cfg, threads=args.threads)
    paths = result.write(args.out_dir)
    for name, agg in result.aggregate().items():
        if agg["mse"] is None:
            print(f"{name:17s} all replications failed")
        else:
            print(f"{name:17s} mse {agg['mse']:.4f}  coverage {agg['coverage']:.3f}  "
                  f"avg se {agg['avg_se']:.4f}  failed {agg['replications_failed']}")
    print(f"results in {paths['summary'].parent}")
    return 0


def cmd_mcmc_compare(args) -> int:
    cfg = _experiment_config(args)
    report = mcmc_compare(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "mcmc_compare.json"
    path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    for label, m in (("mle", report.mle), ("bayes", report.bayes)):
        print(f"{label:6s} mse {m.mse:.4f}  coverage {m.coverage:.3f}  avg se {m.avg_se:.4f}")
    worst = max(report.gelman_rubin.values())
    print(f"max Gelman-Rubin {worst:.3f}")
    if not report.converged:
        print(f"warning: not converged (statistic >= 1.2): {', '.join(report.unconverged)}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand; SUPPRESS keeps
    # the subparser from overwriting a value given before it
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="random seed (default 0; benchmarks use the config's)")
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--out-dir", help="directory for output files (default: current)")
    common.add_argument("--threads", type=int, help="worker processes for replications (default 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="configgp",
        description="Conglomerate multi-fidelity Gaussian-process emulation.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", parents=[common], help="generate a space-filling design")
    p.add_argument("--kind", choices=["maxpro", "maximin", "lhd"], default="maxpro")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--inputs", type=int, help="number of leading input columns; the rest are fidelities")
    p.add_argument("--ranges", help="'lo:hi' per column, comma separated (one pair applies to all)")
    p.add_argument("--iterations", type=int, default=10000)
    p.add_argument("--cross", help="fidelity design CSV to cross with")
    p.add_argument("--cross-mode", choices=["crossed", "paired"], default="crossed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("simulate", parents=[common], help="run a test-function simulator on a design")
    p.add_argument("--function", choices=sorted(TEST_FUNCTIONS), required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="fit an emulator by maximum likelihood")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=[m.value for m in EmulatorKind], default="config-k2")
    p.add_argument("--basis", choices=[b.value for b in BasisKind])
    p.add_argument("--p", type=int, help="expected number of inputs")
    p.add_argument("--q", type=int, help="expected number of fidelity parameters")
    p.add_argument("--l", type=float, default=2.0)
    p.add_argument("--l-r", type=float, nargs="+")
    p.add_argument("--twy-power", type=float, default=4.0)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="predict with a fitted-model file")
    p.add_argument("--model-file", required=True)
    p.add_argument("--data", required=True, help="training CSV the model was fitted on")
    p.add_argument("--inputs", required=True, help="CSV of test inputs (x columns, optional t columns)")
    p.add_argument("--uq", choices=["basis-adjusted", "plug-in"], default="basis-adjusted")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", parents=[common], help="replicated model comparison")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("mcmc-compare", parents=[common], help="plug-in MLE versus fully Bayesian Kernel 2")
    p.set_defaults(func=cmd_mcmc_compare)

    p = sub.add_parser("kernelgrid", parents=[common], help="single-fidelity kernel values on a lattice")
    p.add_argument("--kernel", choices=KERNELS, required=True)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--l", type=float, default=2.0)
    p.add_argument("--l-r", type=float, default=2.0)
    p.add_argument("--resolution", type=int, default=51)
    p.add_argument("--out")
    p.set_defaults(func=cmd_kernelgrid)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, value)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigGPError, OSError) as exc:
        print(f"configgp {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
