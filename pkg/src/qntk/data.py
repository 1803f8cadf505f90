"""Datasets on the unit sphere and their separability statistics."""

from __future__ import annotations

import gzip
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .ntk import UNIT_NORM_TOL, thread_count

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049
SEPARABILITY_FLOOR = 1e-12


class SeparabilityError(ValueError):
    """Two points coincide up to sign, so the dataset separability is zero."""


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("features must be an n x d matrix")
        if y.shape != (x.shape[0],):
            raise ValueError(f"expected {x.shape[0]} labels, got shape {y.shape}")
        if x.shape[0] and np.any(np.abs(np.linalg.norm(x, axis=1) - 1.0) > UNIT_NORM_TOL):
            raise ValueError("dataset rows must be unit norm")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be +1 or -1")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.features[index], self.labels[index], self.name)

    def head(self, n: int) -> "Dataset":
        if n > self.n:
            raise ValueError(f"requested {n} rows from a dataset with {self.n}")
        return self.subset(np.arange(n))


@dataclass(frozen=True)
class SeparabilityFit:
    """delta(n) ~ a1 * n**(-a2) fitted by least squares in log-log space."""

    a1: float
    a2: float
    r_squared: float

    def __call__(self, n):
        return self.a1 * np.asarray(n, dtype=np.float64) ** (-self.a2)

    def to_dict(self) -> dict:
        return {"a1": self.a1, "a2": self.a2, "r_squared": self.r_squared}


# -- IDX ingestion --------------------------------------------------------


def _read_bytes(path) -> bytes:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx_images(path) -> np.ndarray:
    """Read an IDX3 image file (optionally gzipped) as an (n, rows, cols) uint8 array."""
    raw = _read_bytes(path)
    if len(raw) < 16:
        raise ValueError(f"{path}: truncated IDX header")
    magic, count, rows, cols = struct.unpack(">iiii", raw[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise ValueError(f"{path}: bad image magic {magic} (expected {IDX_IMAGE_MAGIC})")
    expected = count * rows * cols
    if len(raw) - 16 < expected:
        raise ValueError(f"{path}: truncated, need {expected} pixel bytes, have {len(raw) - 16}")
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=16).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated IDX header")
    magic, count = struct.unpack(">ii", raw[:8])
    if magic != IDX_LABEL_MAGIC:
        raise ValueError(f"{path}: bad label magic {magic} (expected {IDX_LABEL_MAGIC})")
    if len(raw) - 8 < count:
        raise ValueError(f"{path}: truncated, need {count} labels, have {len(raw) - 8}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=8)


def load_mnist_idx(
    image_path,
    label_path,
    digit_pair: Sequence[int] = (8, 9),
    limit: Optional[int] = None,
    skip: int = 0,
) -> Dataset:
    """Binary MNIST task: first ``limit`` images (after ``skip``) of the two digits.

    The first digit maps to +1 and the second to -1.  Pixels are scaled to
    [0, 1] and each image is projected onto the unit sphere.
    """
    images = read_idx_images(image_path)
    labels = read_idx_labels(label_path)
    if images.shape[1:] != (28, 28):
        raise ValueError(f"expected 28x28 images, got {images.shape[1:]}")
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")
    a, b = digit_pair
    match = np.flatnonzero((labels == a) | (labels == b))[skip:]
    if limit is not None:
        if limit <= 0:
            raise ValueError("limit must be positive")
        if len(match) < limit:
            raise ValueError(f"only {len(match)} images of digits {a}/{b} available, need {limit}")
        match = match[:limit]
    if len(match) == 0:
        raise ValueError(f"no images of digits {a}/{b}")
    pixels = images[match].reshape(len(match), -1).astype(np.float64) / 255.0
    y = np.where(labels[match] == a, 1.0, -1.0)
    return Dataset(project_unit_sphere(pixels), y, f"mnist-{a}v{b}")


# -- sphere data ----------------------------------------------------------


def project_unit_sphere(features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    zero = np.flatnonzero(norms[:, 0] == 0.0)
    if zero.size:
        raise ValueError(f"row {zero[0]} is zero and cannot be projected")
    return x / norms


def sample_sphere(n: int, d: int, seed: int = 0) -> Dataset:
    """n points drawn uniformly from S^(d-1); labels alternate +1, -1."""
    if d < 3:
        raise ValueError("sphere sampling requires d >= 3")
    rng = np.random.default_rng(seed)
    x = project_unit_sphere(rng.standard_normal((n, d)))
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return Dataset(x, y, f"sphere-d{d}-s{seed}")


# -- separability ---------------------------------------------------------


def separability(data, threads: Optional[int] = None) -> tuple[float, tuple[int, int]]:
    """min over i != j of 1 - |x_i . x_j|, with the lexicographically first minimizer."""
    x = np.asarray(getattr(data, "features", data), dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("separability needs at least two points")
    block = 128
    starts = list(range(0, n, block))

    def scan(lo):
        hi = min(lo + block, n)
        g = np.abs(x[lo:hi] @ x.T)
        # only j > i: the pair (i, j) is reported with i < j
        g[np.tril_indices(hi - lo, k=lo, m=n)] = -np.inf
        flat = int(np.argmax(g))
        i, j = divmod(flat, n)
        return float(g[i, j]), lo + i, j

    workers = thread_count(threads)
    if workers == 1:
        results = [scan(lo) for lo in starts]
    else:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(scan, starts))
    # argmax returns the first maximum in row-major order; blocks are in row order
    best = max(results, key=lambda r: (r[0], -r[1], -r[2]))
    delta = 1.0 - best[0]
    if delta <= SEPARABILITY_FLOOR:
        raise SeparabilityError(
            f"points {best[1]} and {best[2]} coincide up to sign (delta = {delta:.3e}); "
            "unit-sphere data must have |x_i . x_j| < 1 for i != j"
        )
    return delta, (best[1], best[2])


def fit_power_law(ns: Sequence[float], deltas: Sequence[float]) -> SeparabilityFit:
    ns = np.asarray(ns, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    if ns.shape != deltas.shape or ns.ndim != 1:
        raise ValueError("ns and deltas must be 1-d sequences of equal length")
    if len(ns) < 3:
        raise ValueError("a power-law fit needs at least three points")
    if np.any(ns <= 0) or np.any(deltas <= 0):
        raise ValueError("power-law fit requires positive n and delta")
    lx, ly = np.log(ns), np.log(deltas)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return SeparabilityFit(float(math.exp(intercept)), float(-slope), float(min(max(r2, 0.0), 1.0)))


def predicted_exponent(d: int) -> float:
    """Leading-order exponent a2 = 4/(d-1) of delta(n) for uniform sphere data."""
    if d < 3:
        raise ValueError("the sphere power law requires d >= 3")
    return 4.0 / (d - 1)


def delta_curve(
    pool, ns: Sequence[int], seeds: Sequence[int], threads: Optional[int] = None
) -> np.ndarray:
    """Median separability over random size-n subsets of ``pool`` for each n."""
    x = np.asarray(getattr(pool, "features", pool), dtype=np.float64)
    out = []
    for n in ns:
        if n > x.shape[0]:
            raise ValueError(f"pool has {x.shape[0]} points, cannot draw {n}")
        vals = []
        for s in seeds:
            idx = np.random.default_rng([int(s), int(n)]).choice(x.shape[0], size=n, replace=False)
            vals.append(separability(x[np.sort(idx)], threads)[0])
        out.append(float(np.median(vals)))
    return np.asarray(out)


def sphere_delta_curve(
    d: int, ns: Sequence[int], seeds: Sequence[int], threads: Optional[int] = None
) -> np.ndarray:
    """Median separability of fresh uniform-sphere samples for each n."""
    return np.asarray([
        float(np.median([separability(sample_sphere(n, d, s * 7919 + n), threads)[0] for s in seeds]))
        for n in ns
    ])


# -- sidecar export -------------------------------------------------------


def write_dataset_sidecar(data: Dataset, csv_path, blob_path) -> None:
    """CSV ``index,label`` plus a raw little-endian float64 feature blob."""
    with open(csv_path, "w", newline="") as f:
        f.write("index,label\n")
        for i, y in enumerate(data.labels):
            f.write(f"{i},{int(y)}\n")
    with open(blob_path, "wb") as f:
        f.write(np.ascontiguousarray(data.features, dtype="<f8").tobytes())


def read_labels_csv(csv_path) -> np.ndarray:
    rows = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    order = np.argsort(rows[:, 0], kind="stable")
    if not np.array_equal(rows[order, 0], np.arange(len(rows))):
        raise ValueError(f"{csv_path}: indices must be 0..n-1")
    return rows[order, 1]


def read_dataset_sidecar(csv_path, blob_path, d: int, name: str = "dataset") -> Dataset:
    labels = read_labels_csv(csv_path)
    feats = np.fromfile(blob_path, dtype="<f8")
    if feats.size != len(labels) * d:
        raise ValueError(f"{blob_path}: expected {len(labels) * d} values, found {feats.size}")
    return Dataset(feats.reshape(len(labels), d), labels, name)
