"""Command-line harness: configuration, experiments and file dumps.

A run is described by a JSON config (``--config``) with flag overrides; flags
win.  Every command writes its CSV/JSON artifacts to ``--output`` and echoes
the main CSV on stdout.  Failures exit nonzero with one ``error: ...`` line.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import __version__
from .activation import ActivationSpec, make_dual
from .approx import (PreconditionSpec, SparsifyConfig, build_sparsified, calibrate_precondition,
                     generate_pattern, precondition)
from .data import (Dataset, delta_curve, fit_power_law, load_mnist_idx, read_labels_csv, sample_sphere,
                   separability, sphere_delta_curve, write_dataset_sidecar)
from .kernel_io import ingest_kernel, write_kernel
from .ntk import KernelMatrix, NtkParams, assemble_kernel, condition_number, cross_kernel, l_conv
from .qsim import (NoiseModel, Pipeline, PipelineConfig, estimate_kmax, fit_log_growth, median_repetitions,
                   reports_to_csv)
from .regression import evaluate_accuracy, predict_batch

DEFAULT_GRID = (16, 32, 64, 128, 256, 512)
MAX_TEST = 1024
BOOTSTRAP_ROUNDS = 1000

DEFAULTS = {
    "dataset": None,
    "activation": "erf",
    "depth": None,
    "depth_fraction": None,
    "pattern": {"c": 2.0, "seed": 0, "percentile": 0.0, "class_bias": False},
    "precondition": None,
    "noise": {"ae_iterations": None, "readout_shots": None, "failure_prob": 0.01},
    "normalization": None,
    "modes": ["sparsified", "diagonal"],
    "grid": list(DEFAULT_GRID),
    "test_size": MAX_TEST,
    "delta_seeds": 10,
    "tolerance": 1e-10,
    "output": ".",
}


class ConfigError(ValueError):
    pass


# -- configuration --------------------------------------------------------


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    raw: dict
    seed: int

    @classmethod
    def build(cls, file_cfg: dict, overrides: dict, seed: int) -> "RunConfig":
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = _merge(_merge(DEFAULTS, file_cfg), overrides)
        rc = cls(cfg, seed)
        rc.validate()
        return rc

    def validate(self) -> None:
        c = self.raw
        ds = c["dataset"]
        if not isinstance(ds, dict) or len(ds) != 1 or next(iter(ds)) not in ("mnist", "sphere", "kernel"):
            raise ConfigError("config needs exactly one dataset source: mnist, sphere or kernel")
        if c["depth"] is not None and c["depth_fraction"] is not None:
            raise ConfigError("set exactly one of depth and depth_fraction")
        if self.source == "kernel" and c["depth_fraction"] is not None:
            raise ConfigError("depth_fraction needs feature data; ingested kernels have a fixed depth")
        if c["depth"] is not None and (int(c["depth"]) != c["depth"] or c["depth"] < 0):
            raise ConfigError("depth must be a non-negative integer")
        if c["depth_fraction"] is not None and not c["depth_fraction"] > 0:
            raise ConfigError("depth_fraction must be positive")
        grid = c["grid"]
        if not grid or any(int(n) != n or n < 1 for n in grid) or list(grid) != sorted(set(grid)):
            raise ConfigError("grid must be a strictly increasing list of positive integers")
        for m in c["modes"]:
            if m not in ("sparsified", "diagonal"):
                raise ConfigError(f"unknown pipeline mode {m!r}")
        if c["normalization"] not in (None, "fit", "exact", "diagonal"):
            raise ConfigError("normalization must be fit, exact or diagonal")
        if self.source == "kernel" and self.normalization == "fit":
            raise ConfigError("normalization=fit needs feature data")
        ActivationSpec.from_config(c["activation"])

    def require_depth(self) -> None:
        if self.source != "kernel" and self.raw["depth"] is None and self.raw["depth_fraction"] is None:
            raise ConfigError("set exactly one of depth and depth_fraction")

    @property
    def source(self) -> str:
        return next(iter(self.raw["dataset"]))

    @property
    def dataset_args(self) -> dict:
        return self.raw["dataset"][self.source]

    @property
    def grid(self) -> list[int]:
        return [int(n) for n in self.raw["grid"]]

    @property
    def dual(self):
        return make_dual(ActivationSpec.from_config(self.raw["activation"]))

    @property
    def normalization(self) -> str:
        norm = self.raw["normalization"]
        if norm is None:
            return "diagonal" if self.source == "kernel" else "fit"
        return norm

    def sparsify_config(self) -> SparsifyConfig:
        p = self.raw["pattern"]
        pre = self.raw["precondition"]
        if isinstance(pre, dict):
            pre = PreconditionSpec(float(pre["beta"]), float(pre.get("exponent", 0.9)),
                                   int(pre.get("reference_n", 16)))
        elif pre not in (None, "auto"):
            raise ConfigError("precondition must be null, \"auto\" or {beta, exponent, reference_n}")
        return SparsifyConfig(c=float(p["c"]), seed=int(p["seed"]), class_bias=bool(p["class_bias"]),
                              percentile=float(p["percentile"]), precondition=pre)

    def noise(self) -> NoiseModel:
        nz = self.raw["noise"]
        return NoiseModel(nz.get("ae_iterations"), nz.get("readout_shots"),
                          float(nz.get("failure_prob", 0.01)), self.seed)


# -- data sources ---------------------------------------------------------


@dataclass
class Source:
    """Training pool plus held-out test set for one config."""

    pool: Optional[Dataset]
    test: Optional[Dataset]
    kernel: Optional[KernelMatrix] = None
    kernel_labels: Optional[np.ndarray] = None
    test_index: Optional[np.ndarray] = None

    def train(self, n: int) -> Dataset:
        if n > self.pool.n:
            raise ConfigError(f"training pool has {self.pool.n} points, grid asks for {n}")
        return self.pool.head(n)


def load_source(rc: RunConfig, n_max: int) -> Source:
    rc.require_depth()
    args = rc.dataset_args
    test_size = int(rc.raw["test_size"])
    if rc.source == "mnist":
        pair = tuple(args.get("pair", (8, 9)))
        full = load_mnist_idx(args["images"], args["labels"], pair)
        if full.n < n_max:
            raise ConfigError(f"only {full.n} images of digits {pair[0]}/{pair[1]}, grid needs {n_max}")
        avail = full.n - n_max
        pool = full.head(n_max)
        test = full.subset(np.arange(n_max, n_max + min(test_size, avail))) if avail else None
        return Source(pool, test)
    if rc.source == "sphere":
        d = int(args.get("d", 10))
        seed = int(args.get("seed", rc.seed))
        pool = sample_sphere(n_max, d, seed)
        test = sample_sphere(min(test_size, MAX_TEST), d, seed + 1)
        return Source(pool, test)
    K, _ = ingest_kernel(args["path"])
    labels = read_labels_csv(args["labels"])
    if labels.shape != (K.size,):
        raise ConfigError(f"kernel has {K.size} rows but the label file has {labels.size}")
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise ConfigError("kernel labels must be +1 or -1")
    if K.size < n_max:
        raise ConfigError(f"kernel has {K.size} rows, grid needs {n_max}")
    avail = K.size - n_max
    test_index = np.arange(n_max, n_max + min(test_size, avail))
    return Source(None, None, K, labels, test_index)


def resolve_depth(rc: RunConfig, train: Dataset) -> int:
    if rc.raw["depth"] is not None:
        return int(rc.raw["depth"])
    delta, _ = separability(train)
    return max(1, math.ceil(rc.raw["depth_fraction"] * l_conv(train.n, delta, rc.dual.mu)))


@dataclass
class Instance:
    """Everything computed for one training-set size."""

    n: int
    depth: int
    kernel: KernelMatrix
    labels: np.ndarray
    test_rows: Optional[np.ndarray]
    test_labels: Optional[np.ndarray]
    train: Optional[Dataset] = None


def build_instance(rc: RunConfig, src: Source, n: int) -> Instance:
    if src.kernel is not None:
        K = KernelMatrix(src.kernel.entries[:n, :n], "ingested")
        rows = src.kernel.entries[np.ix_(src.test_index, np.arange(n))] if src.test_index.size else None
        tl = src.kernel_labels[src.test_index] if src.test_index.size else None
        return Instance(n, int(rc.raw["depth"] or 0), K, src.kernel_labels[:n], rows, tl)
    train = src.train(n)
    depth = resolve_depth(rc, train)
    params = NtkParams(depth, rc.dual)
    K = assemble_kernel(train, params)
    rows = cross_kernel(src.test, train, params) if src.test is not None else None
    tl = src.test.labels if src.test is not None else None
    return Instance(n, depth, K, train.labels, rows, tl, train)


# -- output helpers -------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def to_csv(columns, rows) -> str:
    return "\n".join([",".join(columns)] + [",".join(_cell(v) for v in r) for r in rows]) + "\n"


def _write(out_dir: str, name: str, text: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="") as f:
        f.write(text)
    return path


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- commands -------------------------------------------------------------


def cmd_fit_delta(rc: RunConfig) -> str:
    grid = rc.grid
    seeds = list(range(rc.seed, rc.seed + int(rc.raw["delta_seeds"])))
    if rc.source == "kernel":
        raise ConfigError("fit-delta needs feature data, not an ingested kernel")
    if rc.source == "sphere":
        deltas = sphere_delta_curve(int(rc.dataset_args.get("d", 10)), grid, seeds)
    else:
        args = rc.dataset_args
        pool = load_mnist_idx(args["images"], args["labels"], tuple(args.get("pair", (8, 9))))
        deltas = delta_curve(pool, grid, seeds)
    fit = fit_power_law(grid, deltas)
    csv_text = to_csv(["n", "delta"], zip(grid, deltas))
    _write(rc.raw["output"], "delta.csv", csv_text)
    _write(rc.raw["output"], "delta_fit.json", _json(fit.to_dict()))
    return csv_text


def _delta_fit_for(rc: RunConfig, src: Source):
    """Power law fitted to the separability of the training prefixes."""
    grid = [n for n in rc.grid if n >= 2]
    if len(grid) < 3:
        raise ConfigError("normalization=fit needs at least three grid sizes >= 2")
    return fit_power_law(grid, [separability(src.train(n))[0] for n in grid])


def _pipeline_for(rc: RunConfig, inst: Instance, delta_fit) -> tuple[Pipeline, Optional[float]]:
    norm = rc.normalization
    delta_hat = float(min(delta_fit(inst.n), 1.0)) if norm == "fit" else None
    cfg = PipelineConfig(inst.depth, rc.dual, delta_hat, rc.noise(), rc.sparsify_config(),
                         float(rc.raw["tolerance"]))
    pipe = Pipeline(inst.train, cfg, inst.kernel, labels=inst.labels)
    if norm == "fit":
        k_max = estimate_kmax(delta_hat, inst.depth, rc.dual)
    elif norm == "diagonal":
        k_max = float(np.max(inst.kernel.diagonal))
    else:
        k_max = None
    return pipe, k_max


def _run_points(pipe: Pipeline, inst: Instance, src: Source, mode: str, k_max, index):
    if pipe.config.noise.ae_iterations is not None:
        if inst.train is None:
            raise ConfigError("amplitude-estimation noise needs feature data, not an ingested kernel")
        return [pipe.run(src.test.features[i], mode, int(i)) for i in index]
    return [pipe.run_row(inst.test_rows[i], mode, int(i), k_max) for i in index]


def cmd_scaling(rc: RunConfig) -> str:
    grid = rc.grid
    src = load_source(rc, grid[-1])
    delta_fit = _delta_fit_for(rc, src) if rc.normalization == "fit" else None
    rows, series = [], {m: {"inv_P": [], "shots": []} for m in rc.raw["modes"]}
    for n in grid:
        inst = build_instance(rc, src, n)
        if inst.test_rows is None:
            raise ConfigError("no held-out test points remain after the largest grid size")
        pipe, k_max = _pipeline_for(rc, inst, delta_fit)
        for mode in rc.raw["modes"]:
            reports = _run_points(pipe, inst, src, mode, k_max, range(inst.test_rows.shape[0]))
            solved = pipe.solved(mode)
            inv_p = float(np.median([1.0 / r.P for r in reports]))
            shots = float(np.median([r.readout_shots for r in reports]))
            series[mode]["inv_P"].append(inv_p)
            series[mode]["shots"].append(shots)
            rows.append([n, mode, inst.depth, inv_p, shots, solved["kappa"], solved["s"],
                         solved["kappa_bound"]])
    fits = {}
    for mode, s in series.items():
        fits[mode] = {}
        for key, vals in s.items():
            fits[mode][key] = fit_log_growth(grid, vals) if len(grid) >= 2 else None
    cols = ["n", "mode", "depth", "median_inv_P", "median_readout_shots", "kappa", "s", "kappa_bound"]
    csv_text = to_csv(cols, rows)
    _write(rc.raw["output"], "scaling.csv", csv_text)
    _write(rc.raw["output"], "scaling_fit.json", _json(fits))
    return csv_text


def cmd_accuracy(rc: RunConfig) -> str:
    grid = rc.grid
    src = load_source(rc, grid[-1])
    rows = []
    for n in grid:
        inst = build_instance(rc, src, n)
        if inst.test_rows is None:
            raise ConfigError("no held-out test points remain after the largest grid size")
        for mode in ("exact", "sparsified", "diagonal"):
            if mode == "sparsified":
                K = build_sparsified(inst.kernel, inst.labels, rc.sparsify_config())[0]
            else:
                K = inst.kernel
            preds = predict_batch(mode, K, inst.test_rows, inst.labels)
            acc, two_sigma = evaluate_accuracy(preds, inst.test_labels, BOOTSTRAP_ROUNDS, rc.seed)
            rows.append([n, mode, inst.depth, acc, two_sigma])
    csv_text = to_csv(["n", "mode", "depth", "accuracy", "two_sigma"], rows)
    _write(rc.raw["output"], "accuracy.csv", csv_text)
    return csv_text


def cmd_pipeline(rc: RunConfig, n: Optional[int], test_index: Optional[list[int]]) -> str:
    grid = rc.grid
    n = grid[-1] if n is None else n
    src = load_source(rc, max(n, grid[-1]))
    delta_fit = _delta_fit_for(rc, src) if rc.normalization == "fit" else None
    inst = build_instance(rc, src, n)
    if inst.test_rows is None:
        raise ConfigError("no held-out test points remain after the largest grid size")
    index = list(range(inst.test_rows.shape[0])) if test_index is None else test_index
    for i in index:
        if not 0 <= i < inst.test_rows.shape[0]:
            raise ConfigError(f"test index {i} out of range (0..{inst.test_rows.shape[0] - 1})")
    pipe, k_max = _pipeline_for(rc, inst, delta_fit)
    reports, summary = [], {"n": n, "depth": inst.depth, "test_index": index, "modes": {}}
    for mode in rc.raw["modes"]:
        batch = _run_points(pipe, inst, src, mode, k_max, index)
        reports += batch
        signs = np.array([r.sign for r in batch])
        summary["modes"][mode] = {
            "median_inv_P": float(np.median([1.0 / r.P for r in batch])),
            "median_readout_shots": float(np.median([r.readout_shots for r in batch])),
            "accuracy": float(np.mean(signs == inst.test_labels[index])),
        }
    noise = pipe.config.noise
    if noise.ae_iterations is not None:
        summary["ae_queries_per_element"] = 2 * noise.ae_iterations * median_repetitions(noise.failure_prob)
    csv_text = reports_to_csv(reports)
    _write(rc.raw["output"], "pipeline.csv", csv_text)
    _write(rc.raw["output"], "pipeline_summary.json", _json(summary))
    return csv_text


def cmd_ingest_kernel(path: str, out_dir: str, suppression: Optional[str]) -> str:
    K, report = ingest_kernel(path)
    info = report.to_dict()
    if K.size >= 2 and report.min_eigenvalue > 0:
        info["kappa"] = condition_number(K)
        if suppression is not None:
            spec = calibrate_precondition(K) if suppression == "auto" else PreconditionSpec(float(suppression))
            info["precondition_beta"] = spec.beta
            info["kappa_preconditioned"] = condition_number(precondition(K, spec, K.size))
    text = _json(info)
    _write(out_dir, "ingest_report.json", text)
    return text


def cmd_ntk(rc: RunConfig, n: int, out_path: str, sidecar: bool) -> str:
    if rc.source == "kernel":
        raise ConfigError("ntk needs feature data, not an ingested kernel")
    src = load_source(rc, n)
    train = src.train(n)
    depth = resolve_depth(rc, train)
    K = assemble_kernel(train, NtkParams(depth, rc.dual))
    write_kernel(K, out_path)
    if sidecar:
        base = os.path.splitext(out_path)[0]
        write_dataset_sidecar(train, base + ".labels.csv", base + ".features.f64")
    return to_csv(["path", "n", "depth", "diag_value"], [[out_path, n, depth, K.diag_value]])


def cmd_pattern(n: int, c: float, seed: int, labels_path: Optional[str], out_path: str) -> str:
    labels = None
    if labels_path:
        labels = read_labels_csv(labels_path)[:n]
        if labels.size != n:
            raise ConfigError(f"label file has fewer than {n} rows")
    pattern = generate_pattern(n, c, seed, labels)
    with open(out_path, "wb") as f:
        f.write(pattern.to_bytes())
    return to_csv(["path", "n", "s", "max_degree", "nnz"],
                  [[out_path, n, pattern.degree_target, pattern.max_degree, pattern.nnz]])


# -- argument parsing -----------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dataset (exactly one source)")
    g.add_argument("--mnist-images")
    g.add_argument("--mnist-labels")
    g.add_argument("--pair", type=int, nargs=2, metavar=("POS", "NEG"))
    g.add_argument("--sphere-d", type=int, help="uniform sphere data in this dimension")
    g.add_argument("--kernel", help="ingested QNTK kernel file")
    g.add_argument("--kernel-labels", help="index,label CSV for --kernel")
    m = p.add_argument_group("model")
    m.add_argument("--activation", help="erf, relu, or a JSON Hermite spec")
    m.add_argument("--depth", type=int)
    m.add_argument("--depth-fraction", type=float, help="depth as a fraction of L_conv")
    m.add_argument("--c", type=float, help="pattern constant in s = ceil(c ln n)")
    m.add_argument("--pattern-seed", type=int)
    m.add_argument("--percentile", type=float)
    m.add_argument("--class-bias", action="store_true", default=None)
    m.add_argument("--precondition", help="auto, none, or a beta value")
    m.add_argument("--ae-iterations", type=int)
    m.add_argument("--readout-shots", type=int)
    m.add_argument("--normalization", choices=("fit", "exact", "diagonal"))
    m.add_argument("--modes", type=lambda s: s.split(","))
    m.add_argument("--grid", type=_int_list)
    m.add_argument("--test-size", type=int)
    m.add_argument("--delta-seeds", type=int)


def _overrides(a: argparse.Namespace) -> dict:
    o: dict = {}
    if a.mnist_images or a.mnist_labels:
        ds = {"images": a.mnist_images, "labels": a.mnist_labels}
        if a.pair:
            ds["pair"] = list(a.pair)
        o["dataset"] = {"mnist": ds}
    if a.sphere_d is not None:
        o.setdefault("dataset", {})["sphere"] = {"d": a.sphere_d}
    if a.kernel:
        o.setdefault("dataset", {})["kernel"] = {"path": a.kernel, "labels": a.kernel_labels}
    if a.activation:
        act = a.activation
        o["activation"] = json.loads(act) if act.lstrip().startswith("{") else act
    if a.depth is not None:
        o["depth"], o["depth_fraction"] = a.depth, None
    if a.depth_fraction is not None:
        o["depth_fraction"], o["depth"] = a.depth_fraction, None
    pat = {k: v for k, v in (("c", a.c), ("seed", a.pattern_seed), ("percentile", a.percentile),
                             ("class_bias", a.class_bias)) if v is not None}
    if pat:
        o["pattern"] = pat
    if a.precondition is not None:
        pre = a.precondition
        o["precondition"] = None if pre == "none" else "auto" if pre == "auto" else {"beta": float(pre)}
    noise = {k: v for k, v in (("ae_iterations", a.ae_iterations), ("readout_shots", a.readout_shots))
             if v is not None}
    if noise:
        o["noise"] = noise
    for key in ("normalization", "modes", "grid", "test_size", "delta_seeds"):
        if getattr(a, key) is not None:
            o[key] = getattr(a, key)
    if a.output is not None:
        o["output"] = a.output
    return o


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qntk", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"qntk {__version__}")
    p.add_argument("--seed", type=int, default=0, help="global seed for every stochastic step")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--output", help="output directory")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, help_text in (("fit-delta", "separability curve and power-law fit"),
                            ("scaling", "post-selection and readout cost over the grid"),
                            ("accuracy", "test accuracy of exact, sparsified and diagonal kernels")):
        _add_run_flags(sub.add_parser(name, help=help_text))

    pp = sub.add_parser("pipeline", help="emulated quantum pipeline, one report row per test point")
    _add_run_flags(pp)
    pp.add_argument("--n", type=int, help="training-set size (default: largest grid value)")
    pp.add_argument("--test-index", type=_int_list, help="comma-separated held-out test indices")

    pi = sub.add_parser("ingest-kernel", help="validate a QNTK kernel file")
    pi.add_argument("path")
    pi.add_argument("--precondition", help="auto or a beta value; reports kappa after suppression")

    pn = sub.add_parser("ntk", help="compute a training kernel and dump it in QNTK format")
    _add_run_flags(pn)
    pn.add_argument("--n", type=int, required=True)
    pn.add_argument("--out", required=True)
    pn.add_argument("--sidecar", action="store_true", help="also write the dataset label/feature sidecar")

    pt = sub.add_parser("pattern", help="dump a QSPR sparsity pattern")
    pt.add_argument("--n", type=int, required=True)
    pt.add_argument("--c", type=float, default=2.0)
    pt.add_argument("--pattern-seed", type=int)
    pt.add_argument("--labels", help="index,label CSV enabling the class bias")
    pt.add_argument("--out", required=True)
    return p


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path) as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


def run(argv=None) -> str:
    a = build_parser().parse_args(argv)
    out_dir = a.output or "."
    if a.command == "ingest-kernel":
        return cmd_ingest_kernel(a.path, out_dir, a.precondition)
    if a.command == "pattern":
        seed = a.seed if a.pattern_seed is None else a.pattern_seed
        return cmd_pattern(a.n, a.c, seed, a.labels, a.out)
    file_cfg = _load_config(a.config)
    overrides = _overrides(a)
    if "dataset" in overrides:
        file_cfg.pop("dataset", None)
    rc = RunConfig.build(file_cfg, overrides, a.seed)
    if a.command == "fit-delta":
        return cmd_fit_delta(rc)
    if a.command == "scaling":
        return cmd_scaling(rc)
    if a.command == "accuracy":
        return cmd_accuracy(rc)
    if a.command == "pipeline":
        return cmd_pipeline(rc, a.n, a.test_index)
    return cmd_ntk(rc, a.n, a.out, a.sidecar)


def main(argv=None) -> int:
    try:
        text = run(argv)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one parsable line
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
