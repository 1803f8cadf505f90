import struct

import numpy as np
import pytest

from qntk.kernel_io import KernelFormatError, ingest_kernel, read_kernel_bytes, write_kernel


def test_identity_file(tmp_path):
    path = tmp_path / "eye.qntk"
    write_kernel(np.eye(2), path)
    raw = path.read_bytes()
    assert len(raw) == 16 + 32
    assert raw[:4] == b"QNTK"
    K, report = ingest_kernel(path)
    assert K.source == "ingested"
    np.testing.assert_array_equal(K.entries, np.eye(2))
    assert report.equal_diagonal and report.diag_spread == 0.0 and report.min_eigenvalue == 1.0


def test_round_trip_bytes(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((7, 7))
    a = a @ a.T
    write_kernel(a, tmp_path / "k")
    assert read_kernel_bytes((tmp_path / "k").read_bytes()).tobytes() == a.tobytes()


def test_asymmetry_names_pair(tmp_path):
    a = np.eye(3)
    a[0, 2] = 0.5
    write_kernel(a, tmp_path / "k")
    with pytest.raises(KernelFormatError, match=r"K\[(0,2|2,0)\]"):
        ingest_kernel(tmp_path / "k")


def test_small_asymmetry_is_symmetrized(tmp_path):
    a = np.eye(3) + 0.1
    a[0, 1] += 1e-12
    write_kernel(a, tmp_path / "k")
    K, report = ingest_kernel(tmp_path / "k")
    np.testing.assert_array_equal(K.entries, K.entries.T)
    assert 0 < report.asymmetry < 1e-9


def test_psd_check(tmp_path):
    write_kernel(np.array([[1.0, 2.0], [2.0, 1.0]]), tmp_path / "k")
    with pytest.raises(KernelFormatError, match="semidefinite"):
        ingest_kernel(tmp_path / "k")
    # tiny negative eigenvalues from roundoff are tolerated
    v = np.array([1.0, -1.0]) / np.sqrt(2)
    a = np.outer(v, v) * -1e-10 + np.eye(2) - np.outer(v, v)
    write_kernel(a, tmp_path / "k2")
    assert ingest_kernel(tmp_path / "k2")[1].min_eigenvalue < 0


@pytest.mark.parametrize("mutate,match", [
    (lambda raw: b"QNTX" + raw[4:], "magic"),
    (lambda raw: raw[:4] + struct.pack("<I", 2) + raw[8:], "version"),
    (lambda raw: raw[:-8], "size"),
    (lambda raw: raw[:10], "header"),
])
def test_format_errors(tmp_path, mutate, match):
    write_kernel(np.eye(2), tmp_path / "k")
    (tmp_path / "bad").write_bytes(mutate((tmp_path / "k").read_bytes()))
    with pytest.raises(KernelFormatError, match=match):
        ingest_kernel(tmp_path / "bad")


def test_non_finite(tmp_path):
    a = np.eye(2)
    a[1, 1] = np.nan
    write_kernel(a, tmp_path / "k")
    with pytest.raises(KernelFormatError, match="non-finite"):
        ingest_kernel(tmp_path / "k")


def test_unequal_diagonal_report(tmp_path):
    write_kernel(np.diag([1.0, 2.0, 4.0]), tmp_path / "k")
    K, report = ingest_kernel(tmp_path / "k")
    assert not report.equal_diagonal
    assert report.diag_spread == pytest.approx(0.75)
    assert report.to_dict()["n"] == 3
