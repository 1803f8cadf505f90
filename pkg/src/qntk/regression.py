"""Kernel-regression predictions of the infinitely wide network, and a finite-width oracle."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .activation import DualActivation
from .approx import to_csr
from .ntk import KernelMatrix, _entries

MODES = ("exact", "sparsified", "diagonal")
SOLVER_RTOL = 1e-13


@dataclass(frozen=True, eq=False)
class PredictionBatch:
    """Scores for a batch of test points.  Zero scores get sign 0 (indeterminate).

    Diagonal-mode scores omit the positive 1/K_11 factor and are therefore
    unnormalized; only their signs are comparable across modes.
    """

    scores: np.ndarray
    mode: str

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown prediction mode {self.mode!r}")
        s = np.array(self.scores, dtype=np.float64).reshape(-1)
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    @property
    def signs(self) -> np.ndarray:
        return np.sign(self.scores).astype(np.int64)

    @property
    def indeterminate(self) -> np.ndarray:
        return self.scores == 0.0

    def to_csv(self, labels: Optional[Sequence[float]] = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["test_index", "score", "sign", "label", "mode"])
        for i, (score, sign) in enumerate(zip(self.scores, self.signs)):
            label = "" if labels is None else int(labels[i])
            w.writerow([i, repr(float(score)), int(sign), label, self.mode])
        return buf.getvalue()


def _spd_factor(K):
    a = _entries(K)
    try:
        return scipy.linalg.cho_factor(a, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"kernel is singular or not positive definite: {exc}") from None


def _sparse_solve(K_tilde, y) -> np.ndarray:
    A = to_csr(K_tilde)
    x, info = spla.cg(A, np.asarray(y, dtype=np.float64), rtol=SOLVER_RTOL, atol=0.0,
                      maxiter=10 * A.shape[0] + 100)
    if info != 0:
        raise RuntimeError(f"sparse SPD solve did not converge (info={info})")
    return x


def predict_exact(K, k_star, y) -> float:
    """k_*^T K^-1 y through a Cholesky solve."""
    return float(np.dot(k_star, scipy.linalg.cho_solve(_spd_factor(K), np.asarray(y, float))))


def predict_diagonal(k_star, y) -> float:
    k_star, y = np.asarray(k_star, float), np.asarray(y, float)
    if k_star.shape != y.shape:
        raise ValueError("k_star and y must have equal length")
    return float(np.dot(k_star, y))


def predict_sparsified(K_tilde, k_star, y) -> float:
    return float(np.dot(k_star, _sparse_solve(K_tilde, y)))


def predict_batch(mode: str, K: Optional[KernelMatrix], K_star, y) -> PredictionBatch:
    """Scores for every row of ``K_star`` (test x train) in one factorization.

    ``K`` is the exact kernel for ``exact``, the sparsified kernel for
    ``sparsified``, and is ignored for ``diagonal``.
    """
    K_star = np.atleast_2d(np.asarray(K_star, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if mode == "diagonal":
        weights = y
    elif mode == "exact":
        weights = scipy.linalg.cho_solve(_spd_factor(K), y)
    elif mode == "sparsified":
        weights = _sparse_solve(K, y)
    else:
        raise ValueError(f"unknown prediction mode {mode!r}")
    return PredictionBatch(K_star @ weights, mode)


def evaluate_accuracy(
    preds: PredictionBatch, labels, bootstrap_rounds: int = 1000, seed: int = 0
) -> tuple[float, float]:
    """Accuracy and two standard deviations from Poisson bootstrapping.

    Indeterminate (zero) scores count as errors.
    """
    labels = np.asarray(labels)
    if preds.scores.size == 0:
        raise ValueError("empty prediction batch")
    if labels.shape != preds.scores.shape:
        raise ValueError("labels and predictions differ in length")
    if bootstrap_rounds < 100:
        raise ValueError("use at least 100 bootstrap rounds")
    correct = (preds.signs == labels).astype(np.float64)
    rng = np.random.default_rng(seed)
    w = rng.poisson(1.0, size=(bootstrap_rounds, correct.size)).astype(np.float64)
    tot = w.sum(axis=1)
    ok = tot > 0
    boot = (w[ok] @ correct) / tot[ok]
    return float(correct.mean()), float(2.0 * boot.std())


# -- finite-width oracle --------------------------------------------------


def finite_width_kernel(X, depth: int, width: int, seed: int, dual: DualActivation) -> np.ndarray:
    """Empirical NTK grad f(x_a) . grad f(x_b) of one randomly initialized network.

    The network is v . s(W_L s(... s(W_1 x)/sqrt(m) ...))/sqrt(m) with standard
    Gaussian weights and ``s`` the normalized activation; gradients over all
    weights (W_1..W_L and v) come from an explicit backward pass.
    """
    if width < 64 or depth < 1:
        raise ValueError("need width >= 64 and depth >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    rng = np.random.default_rng(seed)
    m = width
    scale = 1.0 / np.sqrt(m)
    weights = [rng.standard_normal((m, X.shape[1]))]
    weights += [rng.standard_normal((m, m)) for _ in range(depth - 1)]
    v = rng.standard_normal(m)

    # layer inputs (columns are batch entries), with the 1/sqrt(m) folded in
    inputs, pre = [X.T], []
    for W in weights:
        h = W @ inputs[-1]
        pre.append(h)
        inputs.append(dual.activation(h) * scale)

    K = inputs[-1].T @ inputs[-1]  # d f / d v
    grad = (v[:, None] * dual.activation_deriv(pre[-1])) * scale  # d f / d h_L
    for k in range(depth - 1, -1, -1):
        K += (grad.T @ grad) * (inputs[k].T @ inputs[k])  # d f / d W_{k+1}
        if k > 0:
            grad = (weights[k].T @ grad) * scale * dual.activation_deriv(pre[k - 1])
    return 0.5 * (K + K.T)


def finite_width_ntk(x_i, x_j, depth: int, width: int, seed: int, dual: DualActivation) -> float:
    K = finite_width_kernel(np.stack([x_i, x_j]), depth, width, seed, dual)
    return float(K[0, 1])
