"""Infinite-width NTK of a deep fully-connected network and its depth bounds."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .activation import DualActivation, _check_rho, _maybe_scalar

SYMMETRY_TOL = 1e-12
DIAG_TOL = 1e-9
UNIT_NORM_TOL = 1e-9
MAX_DENSE_EIG = 4096


def thread_count(threads: Optional[int] = None) -> int:
    """Worker count: explicit argument, else ``QNTK_THREADS``, else 1."""
    if threads is None:
        threads = int(os.environ.get("QNTK_THREADS", "1") or 1)
    return max(1, int(threads))


@dataclass(frozen=True)
class NtkParams:
    depth: int
    dual: DualActivation

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 0:
            raise ValueError(f"depth must be a non-negative integer, got {self.depth!r}")


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Symmetric kernel matrix with provenance.

    ``diag_value`` is set when every diagonal entry agrees within 1e-9
    relative; computed fully-connected kernels on unit-norm data always do.
    """

    entries: np.ndarray
    source: str = "computed"
    diag_value: Optional[float] = None

    def __post_init__(self):
        a = np.array(self.entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"kernel must be square, got shape {a.shape}")
        if self.source not in ("computed", "ingested"):
            raise ValueError(f"unknown kernel source {self.source!r}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        if self.diag_value is None and a.size:
            d = np.diag(a)
            scale = max(abs(d).max(), np.finfo(float).tiny)
            if np.ptp(d) <= DIAG_TOL * scale:
                object.__setattr__(self, "diag_value", float(d[0]))

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.entries)

    def asymmetry(self) -> tuple[float, tuple[int, int]]:
        """Largest |K_ij - K_ji| relative to max |K|, with its location."""
        diff = np.abs(self.entries - self.entries.T)
        idx = np.unravel_index(int(np.argmax(diff)), diff.shape) if diff.size else (0, 0)
        scale = max(np.abs(self.entries).max(initial=0.0), np.finfo(float).tiny)
        return float(diff[idx] / scale) if diff.size else 0.0, (int(idx[0]), int(idx[1]))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])


@dataclass(frozen=True)
class DepthBounds:
    l_conv: float
    l_zero: float
    b_value: float


# -- kernel elements ------------------------------------------------------


def ntk_element(rho, depth: int, dual: DualActivation):
    """NTK of a depth-``depth`` fully-connected network at correlation ``rho``.

    Sum over layers h = 1..L+1 of ``dual^(h-1)(rho)`` times the product of the
    dual derivative over the layers above it.  The derivative at layer h' acts
    on that layer's pre-activation covariance ``dual^(h'-1)(rho)``, which is
    what reverse-mode differentiation of the explicit network produces.
    Evaluated as the layer recursion theta_h = theta_{h-1} * dual'(s_{h-1}) + s_h
    with s_h = dual^(h)(rho): O(L).  Accepts scalars or arrays.
    """
    if depth < 0 or int(depth) != depth:
        raise ValueError(f"depth must be a non-negative integer, got {depth!r}")
    r = _check_rho(rho)
    s = r
    acc = r
    for _ in range(int(depth)):
        s_next = np.clip(dual.eval(s), -1.0, 1.0)
        acc = acc * dual.deriv(s) + s_next
        s = s_next
    return _maybe_scalar(acc)


def diagonal_value(depth: int, dual: DualActivation) -> float:
    """Closed-form K_ii = (g^(L+1) - 1)/(g - 1) with g = dual'(1)."""
    g = dual.deriv_at_one
    if abs(g - 1.0) < 1e-15:
        raise ValueError("dual'(1) = 1: linear activation has no well-defined diagonal formula")
    return (g ** (depth + 1) - 1.0) / (g - 1.0)


def _correlations(block: np.ndarray, features: np.ndarray) -> np.ndarray:
    return np.clip(block @ features.T, -1.0, 1.0)


def assemble_kernel(data, params: NtkParams, threads: Optional[int] = None) -> KernelMatrix:
    """Kernel over all pairs of rows of ``data`` (a Dataset or an array).

    The diagonal is pinned to rho = 1 exactly: near rho = 1 the composed dual
    amplifies perturbations by roughly dual'(1)^L, so unit-norm roundoff in
    x_i . x_i would otherwise destroy the equal-diagonal structure at depth.
    """
    features = _features(data)
    n = features.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    entries = np.empty((n, n))
    blocks = _row_blocks(n)

    def fill(bounds):
        lo, hi = bounds
        rho = _correlations(features[lo:hi], features)
        rho[np.arange(hi - lo), np.arange(lo, hi)] = 1.0
        entries[lo:hi] = ntk_element(rho, params.depth, params.dual)

    workers = thread_count(threads)
    if workers == 1:
        for b in blocks:
            fill(b)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(fill, blocks))
    # rho_ij and rho_ji come from different dot products; average the two roundings
    entries = 0.5 * (entries + entries.T)
    return KernelMatrix(entries, "computed", diagonal_value(params.depth, params.dual))


def cross_kernel(test, train, params: NtkParams, threads: Optional[int] = None) -> np.ndarray:
    """Kernel rows k(x_*, x_i) for each test row against all training rows."""
    a, b = _features(test), _features(train)
    out = np.empty((a.shape[0], b.shape[0]))
    blocks = _row_blocks(a.shape[0])

    def fill(bounds):
        lo, hi = bounds
        out[lo:hi] = ntk_element(_correlations(a[lo:hi], b), params.depth, params.dual)

    workers = thread_count(threads)
    if workers == 1:
        for blk in blocks:
            fill(blk)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(fill, blocks))
    return out


def _row_blocks(n: int, size: int = 64) -> list[tuple[int, int]]:
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


def _features(data) -> np.ndarray:
    features = getattr(data, "features", data)
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError("features must be a 2-d array")
    norms = np.linalg.norm(features, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
    if bad.size:
        raise ValueError(f"row {bad[0]} is not unit norm (|x| = {norms[bad[0]]!r})")
    return features


# -- depth and element bounds --------------------------------------------


def l_conv(n: int, delta: float, mu: float) -> float:
    """Depth 8 ln(n/delta)/mu above which gradient descent provably converges."""
    return 8.0 * math.log(n / delta) / mu


def l_zero(delta: float, mu: float) -> int:
    return max(math.ceil(math.log(1.0 / (2.0 * delta)) / math.log1p(mu / 2.0)), 0)


def b_bound(depth: float, delta: float, mu: float) -> float:
    lz = l_zero(delta, mu)
    if depth < lz:
        raise ValueError(f"bound requires depth >= L0 = {lz}, got {depth}")
    return 0.5 * (1.0 - mu / 2.0) ** (depth - lz)


def element_bound(delta_ij: float, delta: float, n: int) -> float:
    """Upper bound on |K_ij / K_11| at depth >= L_conv."""
    if delta_ij < 0.5:
        return (delta / (delta_ij * n)) ** 2
    return (delta / n) ** 2


def depth_bounds(n: int, delta: float, mu: float, depth: Optional[float] = None) -> DepthBounds:
    lc = l_conv(n, delta, mu)
    lz = l_zero(delta, mu)
    return DepthBounds(lc, lz, b_bound(lc if depth is None else depth, delta, mu))


# -- spectra --------------------------------------------------------------


def gershgorin_bounds(K) -> tuple[float, float, float]:
    """Row-sum Gershgorin bounds (lambda_min lower, lambda_max upper, kappa upper)."""
    a = _entries(K)
    d = np.diag(a)
    radius = np.abs(a).sum(axis=1) - np.abs(d)
    lo = float(np.min(d - radius))
    hi = float(np.max(d + radius))
    return lo, hi, (hi / lo if lo > 0 else math.inf)


def condition_number(K) -> float:
    a = _entries(K)
    if a.shape[0] > MAX_DENSE_EIG:
        raise ValueError(f"dense eigen-solve limited to n <= {MAX_DENSE_EIG}")
    w = np.linalg.eigvalsh(a)
    if w[0] <= 0:
        raise ValueError(f"matrix is not positive definite (lambda_min = {w[0]!r})")
    return float(w[-1] / w[0])


def _entries(K) -> np.ndarray:
    if isinstance(K, KernelMatrix):
        return K.entries
    if hasattr(K, "toarray"):
        return K.toarray()
    return np.asarray(K, dtype=np.float64)
