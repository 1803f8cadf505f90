"""Sparsified and diagonal kernel approximations.

Sparsity patterns are generated from a counter-based hash keyed by
``(seed, column, draw)``, so any column can be regenerated independently and
the result never depends on how work is scheduled.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .ntk import KernelMatrix, _entries

QSPR_MAGIC = b"QSPR"
QSPR_VERSION = 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def counter_uniform_indices(seed: int, column: int, draws: int, n: int) -> np.ndarray:
    """``draws`` pseudorandom indices in [0, n) for one column; pure in its arguments."""
    col_hash = _mix64(np.array([column], dtype=np.uint64))[0]
    key = _mix64(np.array([int(seed) & _MASK64], dtype=np.uint64) ^ col_hash)[0]
    with np.errstate(over="ignore"):
        counters = key + np.arange(draws, dtype=np.uint64) * _GOLDEN
    bits = _mix64(counters) >> np.uint64(11)
    # 53-bit uniform in [0, 1) scaled to [0, n)
    return np.minimum((bits.astype(np.float64) * 2.0**-53 * n).astype(np.int64), n - 1)


def degree_target(n: int, c: float) -> int:
    """s = ceil(c ln n), at least 1 (the diagonal)."""
    if n < 1 or c <= 0:
        raise ValueError("need n >= 1 and c > 0")
    return max(1, math.ceil(c * math.log(n)))


@dataclass(frozen=True, eq=False)
class SparsityPattern:
    """Symmetric, diagonal-inclusive sparsity pattern.

    Stored as a flat sorted array of keys ``column * n + row``; locating a
    column is a binary search, after which the l-th entry is a direct offset.
    """

    n: int
    seed: int
    c: float
    degree_target: int
    keys: np.ndarray

    def __post_init__(self):
        keys = np.array(self.keys, dtype=np.int64)
        keys.setflags(write=False)
        object.__setattr__(self, "keys", keys)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], seed: int = 0, c: float = 0.0,
                  s: Optional[int] = None) -> "SparsityPattern":
        n = len(rows)
        keys = np.sort(np.concatenate(
            [j * n + np.asarray(sorted(set(map(int, r)) | {j}), dtype=np.int64) for j, r in enumerate(rows)]
        )) if n else np.zeros(0, np.int64)
        pat = cls(n, seed, c, s if s is not None else 1, keys)
        pat.check_symmetric()
        return pat

    @property
    def rows(self) -> list[np.ndarray]:
        cols, idx = np.divmod(self.keys, self.n)
        bounds = np.searchsorted(cols, np.arange(self.n + 1))
        return [idx[bounds[j]:bounds[j + 1]] for j in range(self.n)]

    @property
    def degrees(self) -> np.ndarray:
        return np.bincount(self.keys // self.n, minlength=self.n)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    @property
    def nnz(self) -> int:
        return int(self.keys.size)

    def mask(self) -> np.ndarray:
        m = np.zeros((self.n, self.n), dtype=bool)
        cols, idx = np.divmod(self.keys, self.n)
        m[idx, cols] = True
        return m

    def check_symmetric(self) -> None:
        cols, idx = np.divmod(self.keys, self.n)
        mirrored = np.sort(idx * self.n + cols)
        if not np.array_equal(mirrored, self.keys):
            raise ValueError("sparsity pattern is not symmetric")
        if not np.all(self.mask().diagonal()):
            raise ValueError("sparsity pattern is missing diagonal entries")

    def to_bytes(self) -> bytes:
        out = [QSPR_MAGIC, struct.pack("<IQ", QSPR_VERSION, self.n)]
        for r in self.rows:
            out.append(struct.pack("<I", len(r)))
            out.append(np.asarray(r, dtype="<u8").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SparsityPattern":
        if raw[:4] != QSPR_MAGIC:
            raise ValueError("not a QSPR pattern file (bad magic)")
        version, n = struct.unpack_from("<IQ", raw, 4)
        if version != QSPR_VERSION:
            raise ValueError(f"unsupported QSPR version {version}")
        pos, rows = 16, []
        for _ in range(n):
            if pos + 4 > len(raw):
                raise ValueError("truncated QSPR file")
            (deg,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            if pos + 8 * deg > len(raw):
                raise ValueError("truncated QSPR file")
            rows.append(np.frombuffer(raw, dtype="<u8", count=deg, offset=pos).astype(np.int64))
            pos += 8 * deg
        if pos != len(raw):
            raise ValueError("trailing bytes after QSPR payload")
        return cls.from_rows(rows)


def generate_pattern(
    n: int, c: float = 2.0, seed: int = 0, labels: Optional[Sequence[float]] = None
) -> SparsityPattern:
    """Pseudorandom symmetric pattern with O(log n) entries per row.

    Column j draws ``s - 1`` candidate rows (the diagonal fills the remaining
    slot of s = ceil(c ln n)); candidates with row index >= j are discarded,
    the survivors are mirrored, and the full diagonal is added.  With labels,
    off-diagonal entries joining opposite classes are dropped.  Any row whose
    mirrored entries would push it past ``2 s`` off-diagonals keeps the first
    pairs in column order, so the degree cap holds deterministically.
    """
    s = degree_target(n, c)
    lab = None if labels is None else np.asarray(labels)
    if lab is not None and lab.shape != (n,):
        raise ValueError(f"expected {n} labels")
    cap = 2 * s
    count = np.zeros(n, dtype=np.int64)
    pairs: list[tuple[int, int]] = []
    for j in range(1, n):
        cand = np.unique(counter_uniform_indices(seed, j, s - 1, n)) if s > 1 else ()
        for i in cand:
            i = int(i)
            if i >= j:
                continue
            if lab is not None and lab[i] != lab[j]:
                continue
            if count[i] >= cap or count[j] >= cap:
                continue
            count[i] += 1
            count[j] += 1
            pairs.append((i, j))
    keys = [np.arange(n, dtype=np.int64) * (n + 1)]
    if pairs:
        p = np.asarray(pairs, dtype=np.int64)
        keys.append(p[:, 1] * n + p[:, 0])
        keys.append(p[:, 0] * n + p[:, 1])
    return SparsityPattern(n, int(seed), float(c), s, np.sort(np.concatenate(keys)))


def nu_lookup(pattern: SparsityPattern, j: int, l: int) -> int:
    """Row index of the l-th nonzero (0-based, ascending) in column j."""
    n = pattern.n
    if not 0 <= j < n:
        raise IndexError(f"column {j} out of range")
    start = int(np.searchsorted(pattern.keys, j * n))
    end = int(np.searchsorted(pattern.keys, (j + 1) * n))
    if not 0 <= l < end - start:
        raise IndexError(f"column {j} has {end - start} nonzeros, ordinal {l} out of range")
    return int(pattern.keys[start + l] - j * n)


def identity_pattern(n: int) -> SparsityPattern:
    return SparsityPattern(n, 0, 0.0, 1, np.arange(n, dtype=np.int64) * (n + 1))


def full_pattern(n: int) -> SparsityPattern:
    return SparsityPattern(n, 0, math.inf, n, np.arange(n * n, dtype=np.int64))


# -- approximations -------------------------------------------------------


def sparsify(K: KernelMatrix, pattern: SparsityPattern) -> KernelMatrix:
    """Zero every entry outside ``pattern``; the diagonal is always kept."""
    if pattern.n != K.size:
        raise ValueError(f"pattern is {pattern.n}x{pattern.n} but kernel is {K.size}x{K.size}")
    a = np.where(pattern.mask(), K.entries, 0.0)
    np.fill_diagonal(a, K.diagonal)
    return KernelMatrix(a, K.source, K.diag_value)


def diagonalize(K: KernelMatrix) -> KernelMatrix:
    """K_11 * I for equal-diagonal kernels, else the per-entry diagonal."""
    if K.diag_value is not None:
        return KernelMatrix(K.diag_value * np.eye(K.size), K.source, K.diag_value)
    return KernelMatrix(np.diag(K.diagonal), K.source)


def to_csr(K) -> sp.csr_matrix:
    return sp.csr_matrix(_entries(K))


@dataclass(frozen=True)
class PreconditionSpec:
    """Off-diagonal suppression by f(n) = beta * (ln n)**exponent."""

    beta: float
    exponent: float = 0.9
    reference_n: int = 16

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.factor(self.reference_n) < 1.0 - 1e-12:
            raise ValueError(
                f"suppression factor at reference n={self.reference_n} is "
                f"{self.factor(self.reference_n)!r} < 1"
            )

    def factor(self, n: int) -> float:
        return self.beta * math.log(n) ** self.exponent


def precondition(K_sparse: KernelMatrix, spec: PreconditionSpec, n: Optional[int] = None) -> KernelMatrix:
    """Divide every off-diagonal entry by the suppression factor at size n."""
    f = spec.factor(K_sparse.size if n is None else n)
    if f < 1.0 - 1e-12:
        raise ValueError(f"suppression factor {f!r} < 1 would amplify off-diagonals")
    return _suppress(K_sparse, f)


def _suppress(K: KernelMatrix, factor: float) -> KernelMatrix:
    a = K.entries / factor
    np.fill_diagonal(a, K.diagonal)
    return KernelMatrix(a, K.source, K.diag_value)


def _kappa_or_inf(a: np.ndarray) -> float:
    w = np.linalg.eigvalsh(a)
    return float(w[-1] / w[0]) if w[0] > 0 else math.inf


def calibrate_precondition(
    K_ref_sparse: KernelMatrix,
    target_kappa: float = 1.5,
    exponent: float = 0.9,
    reference_n: Optional[int] = None,
) -> PreconditionSpec:
    """Smallest beta whose suppression brings kappa(K_ref) to ``target_kappa``.

    ``K_ref_sparse`` is the sparsified kernel at the reference size.  The
    factor is never allowed below 1.
    """
    ref = K_ref_sparse.size if reference_n is None else reference_n
    if ref < 2:
        raise ValueError("calibration needs a reference size of at least 2")
    logn = math.log(ref) ** exponent
    a = K_ref_sparse.entries
    d = np.diag(a)

    def kappa_at(f):
        b = a / f
        np.fill_diagonal(b, d)
        return _kappa_or_inf(b)

    if kappa_at(1.0) <= target_kappa:
        return PreconditionSpec(1.0 / logn, exponent, ref)
    limit = float(d.max() / d.min()) if d.min() > 0 else math.inf
    if limit >= target_kappa:
        raise ValueError(
            f"diagonal alone has kappa {limit:.4g} >= target {target_kappa}; no suppression suffices"
        )
    lo, hi = 1.0, 2.0
    while kappa_at(hi) > target_kappa:
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            raise ValueError("could not reach target condition number")
    for _ in range(100):
        mid = math.sqrt(lo * hi)
        if kappa_at(mid) > target_kappa:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-12:
            break
    return PreconditionSpec(hi / logn, exponent, ref)


def percentile_threshold(K_sub: KernelMatrix, q: float) -> float:
    a = K_sub.entries
    iu = np.triu_indices(a.shape[0], k=1)
    sample = np.abs(a[iu])
    if sample.size == 0:
        raise ValueError("the subset kernel has no off-diagonal entries")
    if not 0 <= q <= 100:
        raise ValueError("percentile must lie in [0, 100]")
    return float(np.percentile(sample, q))


def percentile_bias(
    pattern: SparsityPattern, K_sub: KernelMatrix, q: float, K: KernelMatrix
) -> SparsityPattern:
    """Drop pattern entries of ``K`` below the q-th percentile off-diagonal of ``K_sub``.

    Ties with the threshold are kept and the diagonal is never removed.
    """
    if pattern.n != K.size:
        raise ValueError("pattern and kernel sizes differ")
    if q <= 0:
        return pattern
    t = percentile_threshold(K_sub, q)
    cols, rows = np.divmod(pattern.keys, pattern.n)
    keep = (cols == rows) | (np.abs(K.entries[rows, cols]) >= t)
    return SparsityPattern(pattern.n, pattern.seed, pattern.c, pattern.degree_target, pattern.keys[keep])


def inverse_error(K, M) -> float:
    """Spectral-norm relative error ||M^-1 - K^-1|| / ||K^-1||."""
    a, b = _entries(K), _entries(M)
    if a.shape != b.shape:
        raise ValueError("matrices must have the same shape")
    if a.shape[0] > 2048:
        raise ValueError("dense inverse limited to n <= 2048")
    try:
        ka = np.linalg.inv(a)
        mb = np.linalg.inv(b)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular matrix: {exc}") from None
    return float(np.linalg.norm(mb - ka, 2) / np.linalg.norm(ka, 2))


@dataclass(frozen=True)
class SparsifyConfig:
    """Everything needed to turn an exact kernel into the solver's sparse matrix.

    ``precondition`` is None (off), a :class:`PreconditionSpec`, or ``"auto"``
    to calibrate beta on the first ``reference_n`` training points.
    """

    c: float = 2.0
    seed: int = 0
    class_bias: bool = False
    percentile: float = 0.0
    reference_n: int = 16
    precondition: object = None
    target_kappa: float = 1.5
    exponent: float = 0.9


def build_sparsified(K: KernelMatrix, labels, cfg: SparsifyConfig):
    """Return ``(K_tilde, pattern, precondition_spec)`` for training kernel ``K``.

    The reference subset used for percentile estimation and calibration is
    the leading ``reference_n`` training points (i.i.d. by construction).
    """
    n = K.size
    lab = None if labels is None else np.asarray(labels)
    pattern = generate_pattern(n, cfg.c, cfg.seed, lab if cfg.class_bias else None)
    ref = min(cfg.reference_n, n)
    K_ref = KernelMatrix(K.entries[:ref, :ref], K.source)
    if cfg.percentile > 0 and ref >= 2:
        pattern = percentile_bias(pattern, K_ref, cfg.percentile, K)
    K_tilde = sparsify(K, pattern)
    spec = cfg.precondition
    if spec == "auto":
        ref_pattern = generate_pattern(ref, cfg.c, cfg.seed,
                                       lab[:ref] if (cfg.class_bias and lab is not None) else None)
        if cfg.percentile > 0:
            ref_pattern = percentile_bias(ref_pattern, K_ref, cfg.percentile, K_ref)
        spec = calibrate_precondition(sparsify(K_ref, ref_pattern), cfg.target_kappa,
                                      cfg.exponent, ref)
    if spec is not None:
        K_tilde = precondition(K_tilde, spec, n)
    return K_tilde, pattern, spec
