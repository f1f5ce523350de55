import copy

import numpy as np
import pytest
from scipy.special import expit

from ipmtmle.demography import empirical_model, kernel_matrix
from ipmtmle.errors import ConfigError
from ipmtmle.simgen import (IDAHO_DEFAULTS, SimSpec, generate, rotifer_matrices, true_grid,
                            truth_model, truth_value)


@pytest.fixture(scope="module")
def big_basic():
    return generate(SimSpec("basic", n=100_000, n_classes=100), np.random.default_rng(0))


def within_3se(x, p, n):
    return abs(x - p) < 3 * np.sqrt(p * (1 - p) / n)


def test_seedling_fraction(big_basic):
    frac = np.mean(big_basic.z == 0)
    assert 0.345 <= frac <= 0.355
    assert within_3se(frac, 0.35, big_basic.n)


def test_seedling_survival(big_basic):
    s = big_basic.survived[big_basic.z == 0]
    assert within_3se(s.mean(), expit(0.1), s.size)
    assert expit(0.1) == pytest.approx(0.52498, abs=1e-5)


def test_offspring_mean_curve(big_basic):
    # Poisson regression of totals on z recovers exp(-3 + z); the implied mean at z = 1
    from ipmtmle.regress import fit_glm
    fit = fit_glm("poisson", big_basic.offspring.sum(axis=1), big_basic.z[:, None])
    assert fit.predict([[1.0]])[0] == pytest.approx(np.exp(-2.0), rel=0.1)
    assert np.exp(-2.0) == pytest.approx(0.13534, abs=1e-5)


def test_recruits_land_in_first_classes(big_basic):
    tot = big_basic.offspring.sum(axis=0)
    assert tot[11:].sum() == 0
    assert within_3se(tot[0] / tot.sum(), 0.9, tot.sum())


def test_deterministic():
    a = generate(SimSpec("basic", n=300, seed=5))
    b = generate(SimSpec("basic", n=300, seed=5))
    assert np.array_equal(a.z, b.z) and np.array_equal(a.offspring, b.offspring)


def test_truth_reproducible():
    spec = SimSpec("basic", n=1000, n_classes=100, grid="true")
    l1 = truth_value(spec, "lambda")
    from ipmtmle.simgen import _basic_truth
    l2 = kernel_matrix(_basic_truth(spec, true_grid(spec)))
    from ipmtmle.demography import dominant_eigs
    assert abs(dominant_eigs(l2).lam - l1) < 1e-12
    m = truth_model(spec)
    m.validate()


def test_truth_matches_monte_carlo():
    spec = SimSpec("basic", n=200_000, n_classes=10, grid="true")
    ds = generate(spec, np.random.default_rng(1))
    emp = empirical_model(ds)
    tru = truth_model(spec)
    se = np.sqrt(tru.trans[0] * (1 - tru.trans[0]) / np.maximum(
        np.bincount(ds.z_class - 1, minlength=10), 1)[:, None])
    assert np.max(np.abs(emp.trans[0] - tru.trans[0]) / np.maximum(se, 1e-4)) < 5


def _idaho_params():
    return copy.deepcopy({k: v for k, v in IDAHO_DEFAULTS.items() if k != "provenance"})


def test_idaho_missing_block():
    p = _idaho_params()
    del p["growth"]
    with pytest.raises(ConfigError, match="growth"):
        SimSpec("idaho_like", params=p).resolved_params()


def test_idaho_degenerate_like_basic():
    p = _idaho_params()
    p["years"] = {"labels": ["only"], "probs": [1.0], "covariates": {}}
    for blk in ("growth", "survival_seedling", "survival_nonseedling", "fecundity"):
        p[blk]["year"] = 0.0
        p[blk]["covariates"] = {}
    ds = generate(SimSpec("idaho_like", n=4000, n_classes=20, params=p), np.random.default_rng(3))
    assert set(ds.env.tolist()) == {"only"}
    assert abs(np.mean(ds.z == 0) - p["seedling_prob"]) < 0.03
    seed_surv = ds.survived[ds.z == 0].mean()
    assert abs(seed_surv - expit(p["survival_seedling"]["intercept"])) < 0.04


def test_idaho_year_intercepts():
    p = _idaho_params()
    p["years"] = {"labels": ["lo", "hi"], "probs": [0.5, 0.5], "covariates": {}}
    for blk in ("growth", "survival_seedling", "survival_nonseedling", "fecundity"):
        p[blk]["covariates"] = {}
        p[blk]["year"] = 0.0
    p["survival_nonseedling"]["year"] = [-1.0, 1.0]
    ds = generate(SimSpec("idaho_like", n=6000, n_classes=20, params=p), np.random.default_rng(4))
    rate = {lv: ds.survived[ds.env == lv].mean() for lv in ("lo", "hi")}
    assert rate["hi"] > rate["lo"]


def test_idaho_truth_and_data():
    spec = SimSpec("idaho_like", n=1000, n_classes=50)
    ds = generate(spec, np.random.default_rng(0))
    assert ds.covariates.shape == (1000, 5) and ds.env is not None
    m = truth_model(spec, ds.grid)
    m.validate()
    assert m.n_env == 5
    assert np.isfinite(truth_value(spec, "log_lambda_s", ds.grid))


def test_rotifer_structure():
    ds = generate(SimSpec("rotifer_like", n=20_000), np.random.default_rng(5))
    age = (ds.z_class - 1) % 16 + 1
    assert np.all(ds.survived[age == 16] == 0)
    assert set(np.flatnonzero(ds.offspring.sum(axis=0)) + 1) <= {1, 17, 33, 49}
    alive = ds.survived == 1
    assert np.all(ds.z_next_class[alive] == ds.z_class[alive] + 1)


def test_rotifer_pattern_violation():
    U, F = rotifer_matrices()
    F = F.copy()
    F[5, 3] = 1.0
    with pytest.raises(ConfigError, match="fertility mass outside"):
        rotifer_matrices({"U": U, "F": F})


def test_rotifer_empirical_consistency():
    U, F = rotifer_matrices()
    A = U + F
    errs = {}
    for n in (5000, 80_000):
        ds = generate(SimSpec("rotifer_like", n=n), np.random.default_rng(6))
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            K = kernel_matrix(empirical_model(ds))
        cnt = np.bincount(ds.z_class - 1, minlength=64)
        se = np.sqrt((U * (1 - U) + F) / np.maximum(cnt, 1)[None, :])
        z = np.abs(K - A)[A > 0] / se[A > 0]
        assert z.max() < 5
        errs[n] = np.abs(K - A).max()
    # error shrinks at the root-n rate (ratio sqrt(16) = 4)
    assert errs[80_000] < errs[5000] / 2.5
