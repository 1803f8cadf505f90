import math
import os

import numpy as np
import pytest

from qntk.activation import make_dual
from qntk.approx import SparsifyConfig
from qntk.data import Dataset, load_mnist_idx, sample_sphere, separability
from qntk.ntk import NtkParams, cross_kernel, diagonal_value, l_conv, ntk_element
from qntk.qsim import (
    REPORT_COLUMNS,
    NoiseModel,
    Pipeline,
    PipelineConfig,
    QlspInstance,
    ae_band,
    amplitude_estimation_noise,
    estimate_kmax,
    fit_log_growth,
    hhl_cost,
    kernel_state,
    median_repetitions,
    qram_cost_model,
    readout_sign,
    reports_to_csv,
    simulate_pipeline,
    solve_qlsp,
)
from qntk.regression import predict_batch

ERF = make_dual("erf")
MNIST = os.path.join(os.path.dirname(__file__), "data", "mnist")


def random_spd(n, rng):
    a = rng.standard_normal((n, n))
    return a @ a.T / n + 0.5 * np.eye(n)


def test_estimate_kmax():
    assert estimate_kmax(1.0, 5, ERF) == 0.0
    assert estimate_kmax(1e-12, 5, ERF) == pytest.approx(diagonal_value(5, ERF), rel=1e-9)
    v = estimate_kmax(0.05, 20, ERF)
    assert 0 < v < diagonal_value(20, ERF)
    with pytest.raises(ValueError):
        estimate_kmax(0.0, 5, ERF)


def test_kernel_state_examples():
    amps, P, cost = kernel_state(np.array([2.0, 0.0, 0.0]), 2.0)
    assert (P, cost) == (1.0, 1.0)
    np.testing.assert_array_equal(amps, [1.0, 0.0, 0.0])
    amps, P, cost = kernel_state(np.full(9, 3.0), 3.0)
    assert P == 9.0
    np.testing.assert_allclose(amps, 1 / 3)
    # entries above k_max are clipped
    assert kernel_state([5.0, -5.0], 1.0)[1] == 2.0
    with pytest.raises(ValueError):
        kernel_state(np.zeros(3), 1.0)
    with pytest.raises(ValueError):
        kernel_state([1.0], 0.0)


def test_amplitude_estimation_band():
    rng = np.random.default_rng(0)
    for iterations in (1, 7, 100):
        assert amplitude_estimation_noise(0.0, iterations, rng) == 0.0
        assert amplitude_estimation_noise(1.0, iterations, rng) == 1.0
    assert ae_band(0.5, 100) == pytest.approx(0.03240, abs=1e-5)
    p = rng.uniform(0, 1, 10_000)
    for iterations in (3, 50, 1000):
        out = amplitude_estimation_noise(p, iterations, rng)
        assert np.all(np.abs(out - p) <= ae_band(p, iterations) * (1 + 1e-12))
        assert np.all((out >= 0) & (out <= 1))
    with pytest.raises(ValueError):
        amplitude_estimation_noise(1.5, 10, rng)


def test_median_repetitions():
    assert median_repetitions(1 / math.e, 1.0) == 2
    assert median_repetitions(0.01, 0.81) == 24
    assert median_repetitions(1 - 1e-12, 0.9) == 1
    with pytest.raises(ValueError):
        median_repetitions(0.1, 0.5)


def test_solve_qlsp_examples():
    y = np.array([1.0, -1.0, 1.0]) / math.sqrt(3)
    v, info = solve_qlsp(QlspInstance(np.eye(3), y))
    np.testing.assert_allclose(v, y)
    assert info["iterations"] == 1
    y2 = np.array([1.0, -1.0]) / math.sqrt(2)
    v, info = solve_qlsp(QlspInstance(np.array([[1.0, 0.1], [0.1, 1.0]]), y2))
    np.testing.assert_allclose(v, y2, atol=1e-12)
    np.testing.assert_allclose(info["x"], y2 / 0.9, atol=1e-10)


def test_solve_qlsp_matches_dense():
    rng = np.random.default_rng(5)
    A = random_spd(64, rng)
    b = rng.standard_normal(64)
    b /= np.linalg.norm(b)
    v, info = solve_qlsp(QlspInstance(A, b, 1e-12))
    x = np.linalg.solve(A, b)
    assert np.linalg.norm(info["x"] - x) <= 1e-8
    np.testing.assert_allclose(v, x / np.linalg.norm(x), atol=1e-10)


def test_solve_qlsp_errors():
    with pytest.raises(RuntimeError):
        solve_qlsp(QlspInstance(np.diag([1.0, -1.0]), np.array([0.6, 0.8])))
    with pytest.raises(ValueError):
        solve_qlsp(QlspInstance(np.eye(2), np.ones(3)))
    with pytest.raises(ValueError):
        solve_qlsp(QlspInstance(np.eye(2), np.ones(2), 0.0))


def test_hhl_cost():
    c = hhl_cost(math.e, 1.0, 1, 1 / math.e)
    # every logarithm equals ln(e) = 1, leaving 1/eps and ln n
    assert c["queries_matrix"] == pytest.approx(math.e)
    assert c["queries_rhs"] == pytest.approx(math.e)
    assert c["improved_time"] == pytest.approx(1.0)
    c = hhl_cost(512, 1.02, 13, 0.01)
    lg = math.log(13 * 1.02 / 0.01)
    assert c["queries_matrix"] == pytest.approx(1.02**2 * 13 * lg / 0.01)
    assert c["queries_rhs"] == pytest.approx(1.02 * 13 * lg / 0.01)
    # at these parameters the cubed log outweighs 1/eps, so improved_time is the larger one
    assert c["improved_time"] == pytest.approx(math.log(512) * 1.02 * 13 * lg**3)
    assert c["improved_time"] > c["queries_matrix"]
    d = hhl_cost(1024, 1.02, 13, 0.01)
    assert d["improved_time"] - c["improved_time"] == pytest.approx(math.log(2) * 1.02 * 13 * lg**3)
    with pytest.raises(ValueError):
        hhl_cost(4, 0.5, 1, 0.1)


def test_qram_cost_model():
    assert qram_cost_model(math.e, 1)["insert"] == pytest.approx(1.0)
    c = qram_cost_model(1024, 784)
    assert c["query"] / c["insert"] > 1
    assert qram_cost_model(1024, 1568)["insert"] == c["insert"]
    with pytest.raises(ValueError):
        qram_cost_model(0, 1)


def test_readout_sign_examples():
    y = np.array([0.6, 0.8])
    rng = np.random.default_rng(0)
    est, sign, needed = readout_sign(y, y, 100, rng)
    assert (est, sign, needed) == (1.0, 1, 1.0)
    est, sign, needed = readout_sign([1.0, 0.0], [0.0, 1.0], None)
    assert sign == 0 and needed == math.inf
    with pytest.raises(ValueError):
        readout_sign(y, y, 10)


@pytest.mark.parametrize("overlap", [0.0, 0.25, 0.5, 0.9])
@pytest.mark.parametrize("m", [16, 256, 4096])
def test_readout_std_bound(overlap, m):
    a = np.array([1.0, 0.0])
    b = np.array([overlap, math.sqrt(1 - overlap**2)])
    rng = np.random.default_rng([m, int(overlap * 100)])
    est = np.array([readout_sign(a, b, m, rng)[0] for _ in range(1000)])
    # population std is sqrt(1 - overlap^2 / m); at overlap 0 the bound is tight,
    # so allow three standard errors of the sample std
    assert est.std() <= math.sqrt((1 - overlap**2) / m) * (1 + 3 / math.sqrt(2000))
    assert math.sqrt((1 - overlap**2) / m) <= 1 / math.sqrt(m)
    assert abs(est.mean() - overlap) <= 4 / math.sqrt(1000 * m)


def test_pipeline_single_point():
    ds = sample_sphere(1, 4, 0)
    rep = simulate_pipeline(ds, ds.features[0], "diagonal", PipelineConfig(3, ERF))
    assert rep.sign == 1 and rep.P == 1.0 and rep.postselect_shots == 1
    ds = Dataset(ds.features, [-1.0])
    for mode in ("diagonal", "sparsified"):
        assert simulate_pipeline(ds, ds.features[0], mode, PipelineConfig(3, ERF)).sign == -1


def test_report_serialization():
    ds = sample_sphere(20, 5, 0)
    pipe = Pipeline(ds, PipelineConfig(200, ERF, noise=NoiseModel(readout_shots=64, seed=3)))
    rep = pipe.run(sample_sphere(1, 5, 9).features[0], "sparsified")
    text = reports_to_csv([rep])
    assert text.splitlines()[0] == ",".join(REPORT_COLUMNS)
    assert len(text.splitlines()[1].split(",")) == len(REPORT_COLUMNS)
    import json
    assert list(json.loads(rep.to_json())) == list(REPORT_COLUMNS)
    assert 0 < rep.P <= 20 and -1 <= rep.overlap <= 1 and rep.readout_shots >= 1


def test_pipeline_is_deterministic_per_test_index():
    ds = sample_sphere(30, 5, 0)
    test = sample_sphere(4, 5, 1)
    cfg = PipelineConfig(4, ERF, delta_hat=0.1, noise=NoiseModel(ae_iterations=20, readout_shots=100, seed=5))
    a = reports_to_csv(Pipeline(ds, cfg).run_batch(test, "sparsified"))
    b = reports_to_csv(Pipeline(ds, cfg, threads=3).run_batch(test, "sparsified"))
    assert a == b
    # the stream for a point depends only on its index
    single = Pipeline(ds, cfg).run(test.features[2], "sparsified", 2)
    assert single.to_csv_row() == a.splitlines()[3] + "\n"


def test_noiseless_pipeline_matches_regression_signs():
    ds = load_mnist_idx(os.path.join(MNIST, "images-idx3-ubyte.gz"),
                        os.path.join(MNIST, "labels-idx1-ubyte.gz"), (8, 9), limit=256 + 64)
    train = ds.head(256)
    test = ds.features[256:]
    delta, _ = separability(train)
    L = math.ceil(0.1 * l_conv(256, delta, ERF.mu))
    cfg = PipelineConfig(L, ERF, sparsify=SparsifyConfig(c=2.0, seed=0), tolerance=1e-13)
    pipe = Pipeline(train, cfg)
    K_star = cross_kernel(test, train, NtkParams(L, ERF))
    y = train.labels
    diag = [r.sign for r in pipe.run_batch(test, "diagonal")]
    assert diag == list(predict_batch("diagonal", None, K_star, y).signs)
    sp = [r.sign for r in pipe.run_batch(test, "sparsified")]
    assert sp == list(predict_batch("sparsified", pipe.sparsified_kernel(), K_star, y).signs)


def test_enough_shots_recover_noiseless_sign():
    ds = sample_sphere(40, 6, 0)
    test = sample_sphere(20, 6, 1)
    ideal = Pipeline(ds, PipelineConfig(3, ERF)).run_batch(test, "diagonal")
    for i, rep in enumerate(ideal):
        shots = int(16 * rep.readout_shots)
        cfg = PipelineConfig(3, ERF, noise=NoiseModel(readout_shots=shots, seed=11))
        noisy = Pipeline(ds, cfg).run(test.features[i], "diagonal", i)
        assert noisy.sign == rep.sign


def test_ae_noise_perturbs_kernel_row_within_band():
    ds = sample_sphere(10, 4, 0)
    x = sample_sphere(1, 4, 1).features[0]
    ideal = Pipeline(ds, PipelineConfig(2, ERF)).run(x, "diagonal")
    noisy = Pipeline(ds, PipelineConfig(2, ERF, noise=NoiseModel(ae_iterations=10_000))).run(x, "diagonal")
    assert noisy.P == pytest.approx(ideal.P, rel=1e-2)
    assert noisy.P != ideal.P


def test_fit_log_growth():
    ns = np.array([16, 32, 64, 128])
    fit = fit_log_growth(ns, 2 + 3 * np.log(ns))
    assert (fit["a"], fit["b"], fit["r_squared"]) == pytest.approx((2.0, 3.0, 1.0))
    assert not fit["non_increasing"]
    assert fit_log_growth(ns, [4, 3, 3, 1])["non_increasing"]
    assert fit_log_growth(ns, [1, 1, 1, 1])["r_squared"] == 1.0


def test_kernel_row_matches_ntk_element():
    ds = sample_sphere(8, 3, 2)
    x = sample_sphere(1, 3, 4).features[0]
    rep = Pipeline(ds, PipelineConfig(5, ERF)).run(x, "diagonal")
    k = ntk_element(np.clip(ds.features @ x, -1, 1), 5, ERF)
    a = np.clip(k / np.abs(k).max(), -1, 1)
    assert rep.P == pytest.approx(float(a @ a), rel=1e-14)
