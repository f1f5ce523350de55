import numpy as np
import pytest

from ipmtmle.demography import DemographicModel


def random_model(N, rng, n_env=1, fec_scale=0.3, death=0.3):
    """Fully supported random model with ``n_env`` environments."""
    trans = rng.dirichlet(np.ones(N + 1), size=(n_env, N))
    trans[..., 0] = trans[..., 0] * death / trans[..., 0].mean()
    trans /= trans.sum(axis=-1, keepdims=True)
    fec = rng.uniform(0.0, fec_scale, size=(n_env, N, N))
    marg = rng.dirichlet(np.ones(N) * 3, size=n_env)
    levels = tuple(f"e{k}" for k in range(n_env)) if n_env > 1 else (None,)
    w = rng.dirichlet(np.ones(n_env) * 3) if n_env > 1 else np.ones(1)
    return DemographicModel(trans, fec, marg, levels, w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list = []


def record_acceptance(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES, key=lambda t: str(t[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def lambda_experiment(tmp_path_factory):
    """Full-scale lambda experiment on the basic design (minutes)."""
    from ipmtmle.experiment import ExperimentConfig, read_replications, run_experiment
    out = tmp_path_factory.mktemp("lambda_experiment")
    cfg = ExperimentConfig(design="basic", n=1000, n_classes=100, target="lambda",
                           bandwidths=[0.01, 0.1], n_replications=200, n_folds=5,
                           max_iterations=5, seed=2024)
    res = run_experiment(cfg, out)
    return cfg, res, read_replications(out / "replications.csv")
