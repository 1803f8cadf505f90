"""Classical emulation of the quantum prediction pipeline and its cost model.

Every quantum step is replaced by a sampler with the same output statistics:
amplitude estimation returns a value inside its error band, the sign readout
draws Binomial shot counts, and the linear-system step is a conjugate-gradient
solve whose cost is reported through the standard query-complexity formulas.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .activation import DualActivation
from .approx import SparsifyConfig, build_sparsified, to_csr
from .ntk import (KernelMatrix, NtkParams, assemble_kernel, condition_number, gershgorin_bounds,
                  ntk_element)

ALPHA0 = 8.0 / math.pi**2
REPORT_COLUMNS = (
    "n", "mode", "depth", "P", "postselect_shots", "kappa", "s",
    "cg_iters", "hhl_queries", "overlap", "readout_shots", "sign",
)
PIPELINE_MODES = ("diagonal", "sparsified")


@dataclass(frozen=True)
class NoiseModel:
    """``None`` for a field means the ideal (noise-free / infinite-shot) limit."""

    ae_iterations: Optional[int] = None
    readout_shots: Optional[int] = None
    failure_prob: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.ae_iterations is not None and self.ae_iterations < 1:
            raise ValueError("ae_iterations must be a positive integer")
        if self.readout_shots is not None and self.readout_shots < 1:
            raise ValueError("readout_shots must be a positive integer")
        if not 0.0 < self.failure_prob < 1.0:
            raise ValueError("failure_prob must lie in (0, 1)")

    @property
    def ideal(self) -> bool:
        return self.ae_iterations is None and self.readout_shots is None


@dataclass
class PipelineCostReport:
    n: int
    mode: str
    depth: int
    P: float
    postselect_shots: int
    kappa: float
    s: int
    cg_iters: int
    hhl_queries: float
    overlap: float
    readout_shots: float
    sign: int
    estimate: float = field(default=0.0, repr=False)

    def row(self) -> list:
        return [getattr(self, c) for c in REPORT_COLUMNS]

    def to_csv_row(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow([_fmt(v) for v in self.row()])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({c: getattr(self, c) for c in REPORT_COLUMNS})


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else v


def reports_to_csv(reports) -> str:
    return ",".join(REPORT_COLUMNS) + "\n" + "".join(r.to_csv_row() for r in reports)


@dataclass(frozen=True, eq=False)
class QlspInstance:
    matrix: object
    rhs: np.ndarray
    tolerance: float = 1e-10


# -- state preparation ----------------------------------------------------


def estimate_kmax(delta_hat: float, depth: int, dual: DualActivation) -> float:
    """Largest off-diagonal kernel value expected at separability ``delta_hat``."""
    if not 0.0 < delta_hat <= 1.0:
        raise ValueError(f"delta_hat must lie in (0, 1], got {delta_hat!r}")
    return float(ntk_element(1.0 - delta_hat, depth, dual))


def kernel_state(k_star, k_max: float):
    """Normalized amplitudes of clip(k_i / k_max) and the norm P = sum of their squares.

    Returns ``(amplitudes, P, postselect_cost)`` with cost 1/P measurements.
    """
    k = np.asarray(k_star, dtype=np.float64)
    if k_max <= 0 or not math.isfinite(k_max):
        raise ValueError(f"k_max must be positive and finite, got {k_max!r}")
    a = np.clip(k / k_max, -1.0, 1.0)
    P = float(np.sum(a * a))
    if P == 0.0:
        raise ValueError("kernel state has zero norm; all amplitudes vanish")
    return a / math.sqrt(P), P, 1.0 / P


def ae_band(p, iterations: int):
    """Half-width of the amplitude-estimation interval around p."""
    p = np.asarray(p, dtype=np.float64)
    P = float(iterations)
    return 2.0 * math.pi * np.sqrt(p * (1.0 - p)) / P + (math.pi / P) ** 2


def amplitude_estimation_noise(p, iterations: int, rng: np.random.Generator):
    """A sample uniform in the error band around p, clipped to [0, 1]; exact at p in {0, 1}."""
    p = np.asarray(p, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    band = ae_band(p, iterations)
    out = p + band * rng.uniform(-1.0, 1.0, size=p.shape)
    out = np.where((p == 0.0) | (p == 1.0), p, np.clip(out, 0.0, 1.0))
    return float(out) if out.ndim == 0 else out


def median_repetitions(failure_prob: float, alpha0: float = ALPHA0) -> int:
    """Repetitions for the median of estimates (each correct w.p. alpha0) to fail w.p. <= failure_prob."""
    if not 0.0 < failure_prob < 1.0:
        raise ValueError("failure_prob must lie in (0, 1)")
    if not 0.5 < alpha0 <= 1.0:
        raise ValueError("alpha0 must lie in (1/2, 1]")
    return max(1, math.ceil(math.log(1.0 / failure_prob) / (2.0 * (alpha0 - 0.5) ** 2)))


def noisy_kernel_row(x_star, train, depth: int, dual: DualActivation, noise: NoiseModel,
                     rng: np.random.Generator) -> np.ndarray:
    """k(x_*, x_i) with each inner product read out through amplitude estimation."""
    rho = np.clip(np.asarray(train) @ np.asarray(x_star), -1.0, 1.0)
    if noise.ae_iterations is not None:
        p = amplitude_estimation_noise((1.0 - rho) / 2.0, noise.ae_iterations, rng)
        rho = np.clip(1.0 - 2.0 * np.asarray(p), -1.0, 1.0)
    return np.asarray(ntk_element(rho, depth, dual))


# -- linear-system step ---------------------------------------------------


def solve_qlsp(instance: QlspInstance) -> tuple[np.ndarray, dict]:
    """Normalized solution |v> of K v = y by conjugate gradients.

    The iteration budget is 10 sqrt(kappa_ub) ln(1/eps) with kappa_ub the
    Gershgorin bound (or 10 n when Gershgorin cannot certify definiteness).
    Returns ``(v, info)`` with the unnormalized solution under ``info["x"]``.
    """
    A = to_csr(instance.matrix)
    b = np.asarray(instance.rhs, dtype=np.float64)
    n = A.shape[0]
    if b.shape != (n,):
        raise ValueError(f"rhs has shape {b.shape}, expected ({n},)")
    eps = instance.tolerance
    if not 0.0 < eps < 1.0:
        raise ValueError("tolerance must lie in (0, 1)")
    _, _, kappa_ub = gershgorin_bounds(instance.matrix)
    if math.isfinite(kappa_ub):
        budget = max(1, math.ceil(10.0 * math.sqrt(kappa_ub) * math.log(1.0 / eps)))
    else:
        budget = 10 * n
    x = np.zeros(n)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    target = (eps * float(np.linalg.norm(b))) ** 2
    it = 0
    while rr > target:
        if it >= budget:
            raise RuntimeError(
                f"conjugate gradients did not converge in {budget} iterations "
                f"(residual {math.sqrt(rr):.3e}); is the matrix positive definite?"
            )
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise RuntimeError("matrix is not positive definite (p^T A p <= 0)")
        step = rr / pAp
        x += step * p
        r -= step * Ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        raise ValueError("zero right-hand side has no normalized solution")
    return x / norm, {"iterations": it, "x": x, "kappa_ub": kappa_ub, "budget": budget}


def hhl_cost(n: int, kappa: float, s: int, eps: float) -> dict:
    """Query counts for the sparse-access linear-system algorithm, unit constants."""
    if kappa < 1 or s < 1 or not 0 < eps < 1 or n < 1:
        raise ValueError("need kappa >= 1, s >= 1, 0 < eps < 1, n >= 1")
    lg = math.log(s * kappa / eps)
    return {
        "queries_matrix": kappa**2 * s * lg / eps,
        "queries_rhs": kappa * s * lg / eps,
        "improved_time": math.log(n) * kappa * s * lg**3,
    }


def qram_cost_model(n: int, d: int) -> dict:
    """Polylogarithmic insert/query costs of the data structure, unit constants."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    return {"insert": math.log(n) ** 2, "query": math.log(n * d) ** 2}


# -- readout --------------------------------------------------------------


def state_overlap(a, b) -> float:
    """<a|b> of the normalized states."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("states must have nonzero norm")
    return float(np.clip((a / na) @ (b / nb), -1.0, 1.0))


def readout_sign(k_state, y_state, shots: Optional[int], rng: Optional[np.random.Generator] = None):
    """Estimate <k|y> from a Hadamard-test style readout.

    Each shot returns +1 with probability (1 + overlap)/2.  ``shots=None`` is
    the infinite-shot limit.  Returns ``(estimate, sign, shots_needed)``
    where ``shots_needed = ceil(1/overlap**2)`` (``inf`` for zero overlap).
    """
    overlap = state_overlap(k_state, y_state)
    if shots is None:
        estimate = overlap
    else:
        if rng is None:
            raise ValueError("a random generator is required for finite shots")
        hits = rng.binomial(int(shots), (1.0 + overlap) / 2.0)
        estimate = 2.0 * hits / shots - 1.0
    needed = math.inf if overlap == 0.0 else float(math.ceil(1.0 / overlap**2))
    return estimate, int(np.sign(estimate)), needed


# -- pipeline -------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    """``delta_hat=None`` normalizes the kernel state by the exact max |k_i|."""

    depth: int
    dual: DualActivation
    delta_hat: Optional[float] = None
    noise: NoiseModel = NoiseModel()
    sparsify: SparsifyConfig = SparsifyConfig()
    tolerance: float = 1e-10


class Pipeline:
    """Training-side state of the emulated pipeline, shared across test points.

    The linear-system solve depends only on the training set, so it runs once
    per mode; every prediction reuses the normalized solution.  ``data`` may
    be None for an ingested kernel, in which case ``kernel`` and ``labels``
    are required and test rows come in through :meth:`run_row`.
    """

    def __init__(self, data, config: PipelineConfig, kernel: Optional[KernelMatrix] = None,
                 threads: Optional[int] = None, labels=None):
        if data is None and (kernel is None or labels is None):
            raise ValueError("without a dataset both kernel and labels are required")
        self.data = data
        self.config = config
        self.threads = threads
        self.labels = np.asarray(data.labels if labels is None else labels, dtype=np.float64)
        self._kernel = kernel
        self._solved: dict = {}

    @property
    def n(self) -> int:
        return self.labels.size

    def kernel(self) -> KernelMatrix:
        if self._kernel is None:
            self._kernel = assemble_kernel(self.data, NtkParams(self.config.depth, self.config.dual),
                                           self.threads)
        return self._kernel

    def _solve(self, mode: str) -> dict:
        if mode in self._solved:
            return self._solved[mode]
        y = self.labels
        if mode == "diagonal":
            # K11 * I: the normalized solution is y itself
            out = {"v": y / np.linalg.norm(y), "kappa": 1.0, "s": 1, "cg_iters": 0, "hhl": 0.0,
                   "kappa_bound": 1.0}
        elif mode == "sparsified":
            K_tilde, pattern, spec = build_sparsified(self.kernel(), y, self.config.sparsify)
            v, info = solve_qlsp(QlspInstance(K_tilde, y, self.config.tolerance))
            kappa = condition_number(K_tilde)
            s = pattern.max_degree
            cost = hhl_cost(self.n, kappa, s, self.config.tolerance)
            out = {"v": v, "kappa": kappa, "s": s, "cg_iters": info["iterations"],
                   "hhl": cost["queries_matrix"], "kappa_bound": info["kappa_ub"],
                   "K_tilde": K_tilde, "pattern": pattern, "precondition": spec}
        else:
            raise ValueError(f"unknown pipeline mode {mode!r}; expected one of {PIPELINE_MODES}")
        self._solved[mode] = out
        return out

    def solved(self, mode: str) -> dict:
        return self._solve(mode)

    def sparsified_kernel(self) -> KernelMatrix:
        return self._solve("sparsified")["K_tilde"]

    def run(self, x_star, mode: str, test_index: int = 0) -> PipelineCostReport:
        if self.data is None:
            raise ValueError("feature-space test points need a dataset; use run_row")
        cfg = self.config
        rng = np.random.default_rng([cfg.noise.seed, int(test_index)])
        k_star = noisy_kernel_row(x_star, self.data.features, cfg.depth, cfg.dual, cfg.noise, rng)
        k_max = None if cfg.delta_hat is None else estimate_kmax(cfg.delta_hat, cfg.depth, cfg.dual)
        return self._report(k_star, mode, k_max, rng)

    def run_row(self, k_star, mode: str, test_index: int = 0,
                k_max: Optional[float] = None) -> PipelineCostReport:
        """Pipeline on a precomputed kernel row (amplitude-estimation noise does not apply)."""
        rng = np.random.default_rng([self.config.noise.seed, int(test_index)])
        return self._report(np.asarray(k_star, dtype=np.float64), mode, k_max, rng)

    def _report(self, k_star, mode, k_max, rng) -> PipelineCostReport:
        cfg = self.config
        solved = self._solve(mode)
        if k_star.shape != (self.n,):
            raise ValueError(f"kernel row has shape {k_star.shape}, expected ({self.n},)")
        if k_max is None:
            k_max = float(np.max(np.abs(k_star)))
        amps, P, cost = kernel_state(k_star, k_max)
        estimate, sign, needed = readout_sign(amps, solved["v"], cfg.noise.readout_shots, rng)
        return PipelineCostReport(
            n=self.n, mode=mode, depth=cfg.depth, P=P, postselect_shots=math.ceil(cost),
            kappa=float(solved["kappa"]), s=int(solved["s"]), cg_iters=int(solved["cg_iters"]),
            hhl_queries=float(solved["hhl"]), overlap=state_overlap(amps, solved["v"]),
            readout_shots=needed, sign=sign, estimate=float(estimate),
        )

    def run_batch(self, test, mode: str) -> list[PipelineCostReport]:
        feats = np.asarray(getattr(test, "features", test))
        return [self.run(x, mode, i) for i, x in enumerate(feats)]


def simulate_pipeline(data, x_star, mode: str, config: PipelineConfig, test_index: int = 0,
                      kernel: Optional[KernelMatrix] = None) -> PipelineCostReport:
    return Pipeline(data, config, kernel).run(x_star, mode, test_index)


def fit_log_growth(ns, values) -> dict:
    """Least-squares fit values ~ a + b ln n, with R^2 and a monotonicity flag."""
    ns = np.asarray(ns, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if ns.size < 2:
        raise ValueError("need at least two points")
    b, a = np.polyfit(np.log(ns), v, 1)
    resid = v - (a + b * np.log(ns))
    ss = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return {"a": float(a), "b": float(b), "r_squared": r2,
            "non_increasing": bool(np.all(np.diff(v) <= 0))}
