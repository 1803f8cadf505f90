"""Binary kernel-matrix files and the validation applied on ingestion.

Layout (little-endian): magic ``QNTK``, u32 version, u64 n, then n*n float64
entries in row-major order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .ntk import KernelMatrix

QNTK_MAGIC = b"QNTK"
QNTK_VERSION = 1
HEADER = struct.Struct("<4sIQ")
SYMMETRY_TOL = 1e-9
PSD_TOL = 1e-8


class KernelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class IngestReport:
    n: int
    asymmetry: float
    worst_pair: tuple[int, int]
    min_eigenvalue: float
    diag_spread: float
    equal_diagonal: bool

    def to_dict(self) -> dict:
        return {
            "n": self.n, "asymmetry": self.asymmetry, "worst_pair": list(self.worst_pair),
            "min_eigenvalue": self.min_eigenvalue, "diag_spread": self.diag_spread,
            "equal_diagonal": self.equal_diagonal,
        }


def write_kernel(K, path) -> None:
    a = np.ascontiguousarray(getattr(K, "entries", K), dtype="<f8")
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("kernel must be square")
    with open(path, "wb") as f:
        f.write(HEADER.pack(QNTK_MAGIC, QNTK_VERSION, a.shape[0]))
        f.write(a.tobytes())


def read_kernel_bytes(raw: bytes) -> np.ndarray:
    if len(raw) < HEADER.size:
        raise KernelFormatError("truncated QNTK header")
    magic, version, n = HEADER.unpack_from(raw)
    if magic != QNTK_MAGIC:
        raise KernelFormatError(f"bad magic {magic!r} (expected {QNTK_MAGIC!r})")
    if version != QNTK_VERSION:
        raise KernelFormatError(f"unsupported QNTK version {version}")
    expected = HEADER.size + 8 * n * n
    if len(raw) != expected:
        raise KernelFormatError(f"file size {len(raw)} does not match n={n} (expected {expected} bytes)")
    return np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape(n, n).astype(np.float64)


def ingest_kernel(path) -> tuple[KernelMatrix, IngestReport]:
    """Read and validate a kernel file.

    Rejects asymmetry above 1e-9 relative (naming the worst pair) and
    eigenvalues below -1e-8 times the largest diagonal entry.
    """
    with open(path, "rb") as f:
        a = read_kernel_bytes(f.read())
    if not np.all(np.isfinite(a)):
        i, j = np.argwhere(~np.isfinite(a))[0]
        raise KernelFormatError(f"non-finite entry at ({i},{j})")
    K = KernelMatrix(a, "ingested")
    asym, pair = K.asymmetry()
    if asym > SYMMETRY_TOL:
        raise KernelFormatError(
            f"kernel not symmetric: |K[{pair[0]},{pair[1]}] - K[{pair[1]},{pair[0]}]| "
            f"= {asym:.3e} relative > {SYMMETRY_TOL}"
        )
    K = KernelMatrix(0.5 * (a + a.T), "ingested")
    lam = K.min_eigenvalue()
    dmax = float(np.max(K.diagonal))
    if lam < -PSD_TOL * max(dmax, 0.0):
        raise KernelFormatError(f"kernel not positive semidefinite: lambda_min = {lam:.6e}")
    d = K.diagonal
    spread = float(np.ptp(d) / max(abs(d).max(), np.finfo(float).tiny))
    report = IngestReport(K.size, asym, pair, lam, spread, K.diag_value is not None)
    return K, report
