import gzip
import os
import struct

import numpy as np
import pytest

from qntk.data import (
    Dataset,
    SeparabilityError,
    delta_curve,
    fit_power_law,
    load_mnist_idx,
    predicted_exponent,
    project_unit_sphere,
    read_dataset_sidecar,
    read_idx_images,
    read_idx_labels,
    sample_sphere,
    separability,
    write_dataset_sidecar,
)

MNIST = os.path.join(os.path.dirname(__file__), "data", "mnist")
IMAGES = os.path.join(MNIST, "images-idx3-ubyte.gz")
LABELS = os.path.join(MNIST, "labels-idx1-ubyte.gz")


def write_idx(tmp_path, images, labels, magic=(2051, 2049), compress=False, chop=0):
    n = len(labels)
    img = struct.pack(">iiii", magic[0], n, 28, 28) + images.astype(np.uint8).tobytes()
    lab = struct.pack(">ii", magic[1], n) + labels.astype(np.uint8).tobytes()
    if chop:
        img = img[:-chop]
    if compress:
        img, lab = gzip.compress(img), gzip.compress(lab)
    ip, lp = tmp_path / "img", tmp_path / "lab"
    ip.write_bytes(img)
    lp.write_bytes(lab)
    return ip, lp


def random_images(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(1, 256, size=(n, 28, 28)), rng.choice([3, 8, 9], size=n)


@pytest.mark.parametrize("compress", [False, True])
def test_idx_round_trip(tmp_path, compress):
    images, labels = random_images(12)
    ip, lp = write_idx(tmp_path, images, labels, compress=compress)
    np.testing.assert_array_equal(read_idx_images(ip), images)
    np.testing.assert_array_equal(read_idx_labels(lp), labels)


def test_idx_bad_magic_and_truncation(tmp_path):
    images, labels = random_images(4)
    ip, lp = write_idx(tmp_path, images, labels, magic=(2052, 2049))
    with pytest.raises(ValueError, match="magic"):
        read_idx_images(ip)
    ip, lp = write_idx(tmp_path, images, labels, chop=10)
    with pytest.raises(ValueError, match="truncated"):
        read_idx_images(ip)
    (tmp_path / "short").write_bytes(b"\x00\x00")
    with pytest.raises(ValueError):
        read_idx_labels(tmp_path / "short")


def test_load_mnist_synthetic(tmp_path):
    images, labels = random_images(30, seed=2)
    ip, lp = write_idx(tmp_path, images, labels)
    ds = load_mnist_idx(ip, lp, (8, 9), limit=5)
    sel = np.flatnonzero(np.isin(labels, (8, 9)))[:5]
    np.testing.assert_array_equal(ds.labels, np.where(labels[sel] == 8, 1.0, -1.0))
    expected = images[sel].reshape(5, -1) / 255.0
    expected /= np.linalg.norm(expected, axis=1, keepdims=True)
    np.testing.assert_allclose(ds.features, expected, rtol=1e-14)
    with pytest.raises(ValueError):
        load_mnist_idx(ip, lp, (8, 9), limit=0)
    with pytest.raises(ValueError, match="available"):
        load_mnist_idx(ip, lp, (8, 9), limit=1000)


def test_load_mnist_fixture():
    ds = load_mnist_idx(IMAGES, LABELS, (8, 9), limit=512)
    assert ds.features.shape == (512, 784)
    assert set(np.unique(ds.labels)) == {-1.0, 1.0}
    np.testing.assert_allclose(np.linalg.norm(ds.features, axis=1), 1.0, atol=1e-12)


def test_project_unit_sphere():
    np.testing.assert_allclose(project_unit_sphere([[3.0, 4.0]]), [[0.6, 0.8]])
    np.testing.assert_array_equal(project_unit_sphere([[1.0, 0.0]]), [[1.0, 0.0]])
    x = np.random.default_rng(0).standard_normal((100, 784))
    np.testing.assert_allclose(np.linalg.norm(project_unit_sphere(x), axis=1), 1.0, atol=1e-12)
    with pytest.raises(ValueError, match="zero"):
        project_unit_sphere([[1.0, 1.0], [0.0, 0.0]])


def test_sample_sphere():
    a = sample_sphere(50, 10, 7)
    np.testing.assert_allclose(np.linalg.norm(a.features, axis=1), 1.0, atol=1e-12)
    assert np.array_equal(a.features, sample_sphere(50, 10, 7).features)
    with pytest.raises(ValueError):
        sample_sphere(4, 2, 0)
    big = sample_sphere(10_000, 10, 1).features
    rng = np.random.default_rng(3)
    i, j = rng.integers(0, 10_000, size=(2, 20_000))
    keep = i != j
    dots = np.einsum("ij,ij->i", big[i[keep]], big[j[keep]])
    assert abs(dots.mean()) <= 3 / np.sqrt(keep.sum())


def brute_separability(x):
    best, pair = np.inf, None
    for i in range(len(x)):
        for j in range(i + 1, len(x)):
            v = 1 - abs(float(x[i] @ x[j]))
            if v < best:
                best, pair = v, (i, j)
    return best, pair


def test_separability_examples():
    assert separability(np.eye(2))[0] == 1.0
    x = project_unit_sphere([[1.0, 2.0, 3.0], [-1.0, -2.0, -3.0]])
    with pytest.raises(SeparabilityError):
        separability(x)


def test_separability_matches_brute_force():
    for n, threads in ((64, 1), (300, 3)):
        x = sample_sphere(n, 10, n).features
        delta, pair = separability(x, threads)
        bd, bp = brute_separability(x)
        assert delta == bd
        assert pair == bp


def test_fit_power_law():
    ns = np.array([16, 32, 64, 128])
    fit = fit_power_law(ns, 2.0 * ns**-0.5)
    assert (fit.a1, fit.a2, fit.r_squared) == pytest.approx((2.0, 0.5, 1.0))
    assert fit(64) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        fit_power_law([1, 2, 3], [0.1, 0.0, 0.2])
    with pytest.raises(ValueError):
        fit_power_law([1, 2], [0.1, 0.2])


def test_predicted_exponent():
    assert predicted_exponent(10) == pytest.approx(4 / 9)
    assert predicted_exponent(5) == 1.0
    assert predicted_exponent(3) == 2.0
    with pytest.raises(ValueError):
        predicted_exponent(2)


def test_delta_curve_is_decreasing_on_average():
    pool = sample_sphere(600, 10, 0)
    curve = delta_curve(pool, [16, 64, 256], [0, 1, 2])
    assert curve[0] > curve[1] > curve[2]
    with pytest.raises(ValueError):
        delta_curve(pool, [1000], [0])


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 2)), [1, -1])
    with pytest.raises(ValueError):
        Dataset(np.eye(2), [1, 0])
    ds = Dataset(np.eye(3), [1, -1, 1])
    assert ds.head(2).n == 2
    with pytest.raises(ValueError):
        ds.head(5)


def test_sidecar_round_trip(tmp_path):
    ds = sample_sphere(9, 4, 0)
    write_dataset_sidecar(ds, tmp_path / "l.csv", tmp_path / "x.f64")
    assert (tmp_path / "l.csv").read_text().splitlines()[0] == "index,label"
    back = read_dataset_sidecar(tmp_path / "l.csv", tmp_path / "x.f64", 4)
    assert back.features.tobytes() == ds.features.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)
    with pytest.raises(ValueError):
        read_dataset_sidecar(tmp_path / "l.csv", tmp_path / "x.f64", 5)
