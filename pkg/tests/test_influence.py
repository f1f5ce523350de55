import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model
from ipmtmle.data import Dataset, integer_grid
from ipmtmle.demography import DemographicModel, dominant_eigs, mean_kernel
from ipmtmle.influence import (DiscreteLaw, coefficient_matrices, compare_with_oracle,
                               dense_eigs, eif_batch, eif_elasticity, eif_lambda,
                               eif_log_lambda_s, eif_record, gateaux_oracle, oracle_suite,
                               random_law)

TARGETS = ["lambda", "elasticity", "log_lambda_s"]


def support(law):
    return [(z, zs, np.array(y), law.env_levels[e]) for z, zs, y, e in law.points]


def test_lambda_single_class():
    m = DemographicModel([[0.5, 0.5]], [[0.0]], [1.0])
    assert eif_lambda((1, 1, [0.0]), m).psi_growth == pytest.approx(0.5)
    assert eif_lambda((1, 0, [0.0]), m).psi_growth == pytest.approx(-0.5)


def test_fecundity_zero_at_mean(rng):
    m = random_model(3, rng)
    for fn in (eif_lambda, eif_elasticity, eif_log_lambda_s):
        assert fn((2, 1, m.fecundity[0, 1]), m).psi_fecundity == pytest.approx(0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(TARGETS), st.integers(2, 4))
def test_mean_zero_and_orthogonality(seed, target, N):
    rng = np.random.default_rng(seed)
    law = random_law(N, rng, n_env=2 if target == "log_lambda_s" else 1)
    m = law.to_model()
    eig = dense_eigs(mean_kernel(m))
    evs = [eif_record(target, obs, m, eig) for obs in support(law)]
    g = np.array([e.psi_growth for e in evs])
    f = np.array([e.psi_fecundity for e in evs])
    P = law.probs
    assert abs(P @ (g + f)) < 1e-10
    keys = np.array([(pt[0], pt[1], pt[3]) for pt in law.points])
    for key in {tuple(k) for k in keys}:
        sel = np.all(keys == key, axis=1)
        assert abs(P[sel] @ f[sel]) < 1e-10
    for key in {(k[0], k[2]) for k in keys}:
        sel = (keys[:, 0] == key[0]) & (keys[:, 2] == key[1])
        assert abs(P[sel] @ g[sel]) < 1e-10
    tot = g + f
    assert P @ tot ** 2 == pytest.approx(P @ g ** 2 + P @ f ** 2, abs=1e-10)


def test_elasticity_without_fecundity(rng):
    m = random_model(3, rng).with_updates(fecundity=np.zeros((1, 3, 3)))
    eig = dominant_eigs(mean_kernel(m))
    y = np.array([1.0, 0.0, 2.0])
    ev = eif_elasticity((2, 1, y), m, eig)
    expected = (eig.v @ y) * eig.u[1] / (eig.lam * m.marginal[0, 1])
    assert ev.psi_fecundity == pytest.approx(expected, rel=1e-10)
    assert ev.psi_fecundity >= 0


def test_elasticity_all_dead_matches_oracle(rng):
    for _ in range(5):
        law = random_law(3, rng)
        pts = [(z, 0, y, e) for z, _, y, e in law.points]
        law = DiscreteLaw(3, pts, law.probs, law.env_levels)
        m = law.to_model()
        eig = dense_eigs(mean_kernel(m))
        for obs in [(1, 0, [0.2, 0.1, 0.0]), (2, 3, [0.0, 0.4, 0.1]), (3, 1, [1.0, 0, 0])]:
            closed = eif_elasticity(obs, m, eig).psi_total
            orc = gateaux_oracle("elasticity", law, obs, 1e-6).value
            assert closed == pytest.approx(orc, abs=1e-4)


def test_log_lambda_s_single_env_reduces(rng):
    m = random_model(4, rng)
    eig = dominant_eigs(mean_kernel(m))
    for obs in [(1, 0, [0, 1, 0, 0]), (3, 2, [0.5, 0, 0, 2])]:
        a = eif_log_lambda_s(obs, m, eig)
        b = eif_lambda(obs, m, eig)
        assert a.psi_total == pytest.approx(b.psi_total / eig.lam, abs=1e-10)


def test_oracle_mean_functional(rng):
    law = random_law(3, rng)
    Ez = law.expectation([pt[0] for pt in law.points])
    obs = (2, 1, [0, 0, 0])
    assert gateaux_oracle("mean_z", law, obs).value == pytest.approx(2 - Ez, abs=1e-8)


def test_oracle_atom():
    law = DiscreteLaw(1, [(1, 1, [0.5])], [1.0])
    res = gateaux_oracle("lambda", law, (1, 1, [0.5]))
    assert res.value == pytest.approx(0, abs=1e-10)


def test_oracle_h_range(rng):
    with pytest.raises(ValueError):
        gateaux_oracle("lambda", random_law(2, rng), (1, 1, [0, 0]), h=0.1)


@pytest.mark.parametrize("target,tol", [("lambda", 1e-4), ("elasticity", 1e-3),
                                        ("log_lambda_s", 1e-4)])
def test_oracle_agreement_small(target, tol):
    res = oracle_suite([target], n_instances=6, seed=5)
    assert max(r.rel_error for r in res) < tol
    assert max(r.mean_abs for r in res) < 1e-10


def test_log_lambda_s_fixed_weights_differs_from_oracle():
    # the oracle also perturbs the environment frequencies; the fixed-weight
    # influence misses that piece, the weight term restores agreement
    law = random_law(3, np.random.default_rng(0), n_env=2)
    m = law.to_model()
    eig = dense_eigs(mean_kernel(m))
    obs = support(law)[0]
    orc = gateaux_oracle("log_lambda_s", law, (*obs[:3], 0)).value
    fixed = eif_log_lambda_s(obs, m, eig).psi_total
    full = eif_log_lambda_s(obs, m, eig, env_weight_term=True).psi_total
    assert full == pytest.approx(orc, abs=1e-6)
    assert abs(fixed - orc) > 1e-4


def test_batch_matches_record(rng):
    m = random_model(4, rng, n_env=2)
    n = 30
    z = rng.integers(1, 5, n)
    zs = rng.integers(0, 5, n)
    y = rng.poisson(0.5, (n, 4))
    env = rng.choice(["e0", "e1"], n).astype(object)
    ds = Dataset([str(k) for k in range(n)], z, (zs > 0).astype(int),
                 np.where(zs > 0, zs, np.nan), y, integer_grid(4), env=env,
                 z_class=z, z_next_class=zs)
    for target in TARGETS:
        coefs = coefficient_matrices(target, m)
        g, f, _ = eif_batch(coefs, m, ds)
        for k, rec in enumerate(ds.records):
            ev = eif_record(target, rec, m)
            assert g[k] == pytest.approx(ev.psi_growth, abs=1e-10)
            assert f[k] == pytest.approx(ev.psi_fecundity, abs=1e-10)


def test_compare_reports_support(rng):
    c = compare_with_oracle("lambda", random_law(2, rng))
    assert c.n_support == 2 * 3 * 2
