import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model
from ipmtmle.data import Dataset, SizeGrid, integer_grid
from ipmtmle.demography import (DemographicModel, FitConfig, PositivityWarning, deflated_pinv,
                                dominant_eigs, empirical_model, estimate_model, kernel_matrix,
                                read_matrix_csv, target_elasticity, target_lambda,
                                target_log_lambda_s, write_matrix_csv)
from ipmtmle.errors import EstimationError
from ipmtmle.simgen import SimSpec, generate


def model_from_K(GM, F, marg=None):
    GM, F = np.asarray(GM, float), np.asarray(F, float)
    N = GM.shape[0]
    trans = np.column_stack([1 - GM.sum(axis=0), GM.T])
    return DemographicModel(trans, F.T, np.full(N, 1 / N) if marg is None else marg)


def test_kernel_examples():
    trans = np.array([[0.3, 0.5, 0.2], [0.4, 0.1, 0.5]])
    F = np.array([[0.1, 0.0], [0.0, 0.1]])
    m = DemographicModel(trans, F.T, [0.5, 0.5])
    assert np.allclose(kernel_matrix(m), [[0.6, 0.1], [0.2, 0.6]])
    assert np.allclose(kernel_matrix(model_from_K(np.eye(2), np.zeros((2, 2)))), np.eye(2))
    Fr = np.array([[0.3, 0.4], [0.1, 0.2]])
    assert np.allclose(kernel_matrix(model_from_K(np.zeros((2, 2)), Fr)), Fr)


def test_eig_examples():
    e = dominant_eigs(np.eye(2), check_primitive=False)
    assert e.lam == pytest.approx(1) and np.allclose(e.u, 0.5) and np.allclose(e.v, 1)
    e = dominant_eigs([[0.5, 0.2], [0.3, 0.4]])
    assert e.lam == pytest.approx(0.7, abs=1e-12)
    e = dominant_eigs(np.diag([2.0, 3.0]), check_primitive=False)
    assert e.lam == pytest.approx(3, abs=1e-10) and np.allclose(e.u, [0, 1], atol=1e-10)


def test_rotation_has_no_real_dominant():
    with pytest.raises(EstimationError, match="no real dominant eigenvalue"):
        dominant_eigs([[0, 0, 2.0], [1, 0, 0], [0, 1, 0]], max_iter=2000,
                      check_primitive=False)


def test_power_vs_characteristic_polynomial():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        K = rng.uniform(0.01, 1, (2, 2))
        tr, det = np.trace(K), np.linalg.det(K)
        lam = (tr + np.sqrt(tr * tr - 4 * det)) / 2
        worst = max(worst, abs(dominant_eigs(K).lam - lam))
    assert worst < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 6))
def test_eig_residuals_and_perron(seed, N):
    K = np.random.default_rng(seed).uniform(0.0, 1.0, (N, N)) + 1e-3
    e = dominant_eigs(K)
    scale = np.abs(K).sum(axis=1).max()
    assert e.residual_right < 1e-10 * scale and e.residual_left < 1e-10 * scale
    assert np.all(e.u > 0) and np.all(e.v > 0)
    assert e.u.sum() == pytest.approx(1) and e.v @ e.u == pytest.approx(1)


def moore_penrose_error(A, P):
    return max(np.max(np.abs(A @ P @ A - A)), np.max(np.abs(P @ A @ P - P)),
               np.max(np.abs((A @ P).T - A @ P)), np.max(np.abs((P @ A).T - P @ A)))


def test_pinv_examples():
    assert np.allclose(deflated_pinv(1.0, np.zeros((3, 3))), np.eye(3))
    assert np.allclose(deflated_pinv(1.0, np.eye(3)), 0)
    K = np.array([[0.5, 0.2], [0.3, 0.4]])
    assert moore_penrose_error(0.7 * np.eye(2) - K, deflated_pinv(0.7, K)) < 1e-10


def test_pinv_identities_random():
    rng = np.random.default_rng(8)
    for _ in range(100):
        N = rng.integers(2, 7)
        K = rng.uniform(0, 1, (N, N))
        lam = dominant_eigs(K).lam
        assert moore_penrose_error(lam * np.eye(N) - K, deflated_pinv(lam, K)) < 1e-10


def test_target_trivia():
    assert target_lambda(model_from_K(np.eye(2) * 1.0, np.zeros((2, 2)))) == pytest.approx(1)
    F = np.array([[0.3, 0.4], [0.1, 0.2]])
    assert target_elasticity(model_from_K(np.zeros((2, 2)), F)) == pytest.approx(1, abs=1e-12)
    GM = np.array([[0.4, 0.1], [0.2, 0.5]])
    assert target_elasticity(model_from_K(GM, np.zeros((2, 2)))) == pytest.approx(0, abs=1e-15)


def test_elasticity_finite_difference():
    trans = np.array([[0.3, 0.5, 0.2], [0.4, 0.1, 0.5]])
    F = np.array([[0.1, 0.0], [0.0, 0.1]])
    h = 1e-6

    def lam(c):
        return target_lambda(DemographicModel(trans, c * F.T, [0.5, 0.5]))

    fd = (lam(1 + h) - lam(1 - h)) / (2 * h * lam(1))
    assert target_elasticity(DemographicModel(trans, F.T, [0.5, 0.5])) == pytest.approx(fd, abs=1e-5)


def test_elasticity_partition_and_scale(rng):
    for _ in range(50):
        m = random_model(4, rng)
        e = dominant_eigs(kernel_matrix(m))
        GM, F = m.growth_survival(0), m.fecundity_matrix(0)
        part = e.v @ GM @ e.u / e.lam + target_elasticity(m, e)
        assert part == pytest.approx(1, abs=1e-10)
        c = 1.7
        K2 = c * kernel_matrix(m)
        assert dominant_eigs(K2).lam == pytest.approx(c * e.lam, rel=1e-10)
        m2 = model_from_K(GM * 0.5, F * 0.5)
        assert target_elasticity(m2) == pytest.approx(target_elasticity(m), abs=1e-10)


def test_log_lambda_s_examples(rng):
    m = random_model(3, rng)
    assert target_log_lambda_s(m) == pytest.approx(np.log(target_lambda(m)), abs=1e-12)
    # scalar multiples with c1 c2 = 1: both kernels built from the same base
    base = random_model(3, rng, fec_scale=0.1)
    K = kernel_matrix(base)
    GMs = [c * base.growth_survival(0) for c in (0.8, 1.25)]
    Fs = [c * base.fecundity_matrix(0) for c in (0.8, 1.25)]
    trans = np.stack([np.column_stack([1 - G.sum(axis=0), G.T]) for G in GMs])
    m2 = DemographicModel(trans, np.stack([F.T for F in Fs]), np.full((2, 3), 1 / 3),
                          ("a", "b"), [0.5, 0.5])
    # v'K_theta u / v'u = c_theta lambda(K), so the weights cancel the log c terms
    assert target_log_lambda_s(m2) == pytest.approx(np.log(dominant_eigs(K).lam), abs=1e-12)
    # three environments against direct summation
    m3 = random_model(3, rng, n_env=3)
    m3 = m3.with_updates(env_weights=np.full(3, 1 / 3))
    Ks = [kernel_matrix(m3, e) for e in range(3)]
    w, V = np.linalg.eig(sum(Ks).T / 3)
    v = np.real(V[:, np.argmax(np.real(w))])
    w, U = np.linalg.eig(sum(Ks) / 3)
    u = np.real(U[:, np.argmax(np.real(w))])
    direct = np.mean([np.log(v @ Kt @ u / (v @ u)) for Kt in Ks])
    assert target_log_lambda_s(m3) == pytest.approx(direct, abs=1e-12)


def _deterministic_dataset(n=400, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.random(n)
    return Dataset([str(i) for i in range(n)], z, np.ones(n), z, np.zeros((n, 5)),
                   SizeGrid(np.quantile(z, [0.2, 0.4, 0.6, 0.8])))


def test_estimate_degenerate_dynamics():
    ds = _deterministic_dataset()
    m = estimate_model(ds, FitConfig(bandwidth=1e-4))
    assert np.allclose(m.fecundity, 0)
    diag = np.diagonal(m.growth_survival(0))
    assert np.all(diag > 0.9)
    m.validate()


@pytest.fixture(scope="module")
def basic_data():
    return generate(SimSpec("basic", n=1000, n_classes=100), np.random.default_rng(11))


def test_estimate_basic_ridge(basic_data):
    m = estimate_model(basic_data, FitConfig(bandwidth=0.01))
    m.validate()
    GM = m.growth_survival(0)
    reps = np.array([np.median(basic_data.z[basic_data.z_class == i])
                     for i in range(1, 101)])
    mode = np.argmax(GM, axis=0)
    target = np.searchsorted(basic_data.grid.split_points, 0.8 * reps + 0.1)
    assert np.median(np.abs(mode - target)) <= 3


def test_bandwidth_entropy(basic_data):
    def entropy(m):
        t = m.trans[0]
        return -(t * np.log(t)).sum(axis=1)
    lo = entropy(estimate_model(basic_data, FitConfig(bandwidth=0.01)))
    hi = entropy(estimate_model(basic_data, FitConfig(bandwidth=0.1)))
    assert np.all(hi > lo)


def test_estimate_no_survivors():
    ds = _deterministic_dataset(50)
    ds = Dataset(ds.ids, ds.z, np.zeros(50), np.full(50, np.nan), ds.offspring, ds.grid)
    with pytest.raises(EstimationError):
        estimate_model(ds)


def test_empirical_counts():
    g = integer_grid(3)
    ds = Dataset(list("abcd"), [1, 1, 1, 1], [0, 0, 1, 1], [np.nan, np.nan, 2, 3],
                 [[1, 0, 0], [0, 0, 0], [1, 0, 2], [0, 0, 0]], g)
    with pytest.warns(PositivityWarning):
        m = empirical_model(ds)
    assert np.allclose(m.trans[0, 0], [0.5, 0, 0.25, 0.25])
    assert np.allclose(m.fecundity[0, 0], [0.5, 0, 0.5])
    assert np.allclose(m.trans.sum(axis=2), 1)
    assert not m.supported[0, 1]


def test_empirical_single_record():
    ds = Dataset(["a"], [2], [1], [1], [[0, 0, 0]], integer_grid(3))
    with pytest.warns(PositivityWarning):
        m = empirical_model(ds)
    assert np.allclose(m.trans.sum(axis=2), 1)


def test_matrix_csv_round_trip(tmp_path):
    M = np.random.default_rng(0).random((3, 3))
    write_matrix_csv(M, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().startswith("j\\i,1,2,3")
    assert np.array_equal(read_matrix_csv(tmp_path / "m.csv"), M)
