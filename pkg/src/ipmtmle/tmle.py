"""Cross-validated TMLE for the kernel targets.

Each fold's training data gives an initial :class:`DemographicModel`.  An
iteration then tilts every fold model along the growth submodel

    p_eps(j | i) ~ exp(eps1 * phi(i, j)) p(j | i)

and the fecundity submodel ``Q_j(i) * exp(eps2 * H_j(i))``, with one
``eps`` shared by all folds and fitted on the pooled validation records
(each scored against its own fold's model).  The loop stops once both
fitted ``eps`` fall below ``epsilon_tol``.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .data import Dataset
from .demography import (DemographicModel, FitConfig, dominant_eigs, empirical_model,
                         estimate_model, mean_kernel)
from .errors import DataError, EstimationError
from .influence import (Coefficients, coefficient_matrices, eif_batch, env_indices,
                        fecundity_h, growth_phi)
from .regress import fold_labels

logger = logging.getLogger(__name__)

Z95 = 1.959963984540054
Q_LOG_FLOOR = 1e-300


class EpsilonBoundaryWarning(RuntimeWarning):
    pass


class FoldDroppedWarning(RuntimeWarning):
    pass


@dataclass
class TmleConfig:
    """Settings of :func:`run_cv_tmle`.

    ``cross_fit="auto"`` fits fold models out of fold except for the
    empirical initial model, which is fitted once on all records (its
    likelihood scores are then exactly zero, so TMLE leaves it alone).
    ``epsilon_bound`` is divided by ``max(1, sup |phi|)`` before use.
    """

    target: str = "lambda"
    n_folds: int = 5
    max_iterations: int = 5
    epsilon_tol: float = 1e-4
    epsilon_bound: float = 1.0
    seed: int = 0
    initial: str = "parametric"
    cross_fit: bool | str = "auto"
    fit: FitConfig = field(default_factory=FitConfig)
    env_weight_term: bool = False
    brent_tol: float = 1e-8

    def __post_init__(self):
        if self.n_folds < 2:
            raise ValueError("n_folds must be at least 2")
        if self.target not in ("lambda", "elasticity", "log_lambda_s"):
            raise ValueError(f"unknown target {self.target!r}")
        if self.initial not in ("parametric", "empirical"):
            raise ValueError(f"unknown initial model {self.initial!r}")
        if isinstance(self.fit, dict):
            self.fit = FitConfig(**self.fit)

    @property
    def use_cross_fit(self) -> bool:
        if self.cross_fit == "auto":
            return self.initial != "empirical"
        return bool(self.cross_fit)


@dataclass
class TmleState:
    fold_assignments: np.ndarray
    models: list
    active_folds: list
    epsilon_history: list = field(default_factory=list)
    converged: bool = False


@dataclass
class TargetEstimate:
    target: str
    estimate: float
    std_error: float
    ci_low: float
    ci_high: float
    initial: float
    initial_std_error: float
    psi_validation: np.ndarray
    estimate_trace: list
    std_error_trace: list
    epsilon_trace: list
    fold_estimates: list
    converged: bool
    n_iterations: int
    warnings: list = field(default_factory=list)

    def ci(self, k: int | None = None):
        """95% interval after ``k`` iterations (default: final)."""
        if k is None:
            return self.ci_low, self.ci_high
        est, se = self.estimate_trace[k], self.std_error_trace[k]
        return est - Z95 * se, est + Z95 * se

    def to_report(self) -> dict:
        d = asdict(self)
        d.pop("psi_validation")
        d["n_records"] = int(np.isfinite(self.psi_validation).sum())
        return d

    def write_report(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_report(), fh, indent=1)


# ---------------------------------------------------------------------------
# Submodel paths
# ---------------------------------------------------------------------------

def tilt_growth(model: DemographicModel, phi: np.ndarray, eps: float) -> DemographicModel:
    """Exponentially tilt every conditional row of ``trans`` by ``eps * phi``."""
    if eps == 0.0:
        return model.with_updates()
    a = eps * phi
    a = a - a.max(axis=-1, keepdims=True)
    t = model.trans * np.exp(a)
    return model.with_updates(trans=t / t.sum(axis=-1, keepdims=True))


def tilt_fecundity(model: DemographicModel, H: np.ndarray, eps: float) -> DemographicModel:
    """``Q_j(i) <- Q_j(i) exp(eps * H_j(i))``."""
    if eps == 0.0:
        return model.with_updates()
    return model.with_updates(fecundity=model.fecundity * np.exp(eps * H))


# ---------------------------------------------------------------------------
# Pooled validation objectives
# ---------------------------------------------------------------------------

@dataclass
class _FoldStats:
    """Sufficient statistics of one validation fold."""

    counts: np.ndarray   # (E, N, N+1) transitions
    n_src: np.ndarray    # (E, N) records per source class
    y_sum: np.ndarray    # (E, N, N) summed recruits


def _fold_stats(dataset: Dataset, idx: np.ndarray, env_idx: np.ndarray, E: int) -> _FoldStats:
    N = dataset.n_classes
    e, i = env_idx[idx], dataset.z_class[idx] - 1
    counts = np.zeros((E, N, N + 1))
    np.add.at(counts, (e, i, dataset.z_next_class[idx]), 1.0)
    y_sum = np.zeros((E, N, N))
    np.add.at(y_sum, (e, i), dataset.offspring[idx].astype(float))
    return _FoldStats(counts, counts.sum(axis=2), y_sum)


def growth_loglik(eps: float, models, phis, stats) -> float:
    """Pooled validation log-likelihood of the growth tilt at ``eps``."""
    total = 0.0
    for m, phi, st in zip(models, phis, stats):
        rows = st.n_src > 0
        with np.errstate(divide="ignore"):
            logp = np.log(m.trans[rows]) + eps * phi[rows]
        logp -= logsumexp(logp, axis=1, keepdims=True)
        c = st.counts[rows]
        with np.errstate(invalid="ignore"):
            total += float(np.sum(np.where(c > 0, c * logp, 0.0)))
    return total


def fecundity_loss(eps: float, models, Hs, stats) -> float:
    """Pooled Poisson-type loss ``sum -Y log Q_eps + Q_eps``."""
    total = 0.0
    for m, H, st in zip(models, Hs, stats):
        q = m.fecundity * np.exp(eps * H)
        total += float(np.sum(-st.y_sum * np.log(np.maximum(q, Q_LOG_FLOOR))
                              + st.n_src[:, :, None] * q))
    return total


def _bounded_min(fun, bound: float, tol: float, label: str, notes: list) -> float:
    res = minimize_scalar(fun, bounds=(-bound, bound), method="bounded",
                          options={"xatol": tol})
    eps = float(res.x)
    # the bounded search never returns the endpoint itself
    for edge in (-bound, bound):
        if abs(eps - edge) < 1e-5 * bound and fun(edge) <= fun(eps):
            eps = edge
    if abs(abs(eps) - bound) < 1e-5 * bound:
        msg = f"epsilon at boundary ({label}: {eps:+.4g})"
        warnings.warn(msg, EpsilonBoundaryWarning, stacklevel=3)
        notes.append(msg)
    return eps


def _scaled_bound(bound, arrays):
    sup = max((float(np.max(np.abs(a))) for a in arrays), default=0.0)
    return bound / max(1.0, sup)


def fit_epsilon_growth(models, phis, stats, bound: float = 1.0, tol: float = 1e-8,
                       notes: list | None = None) -> float:
    """Shared growth ``eps`` maximising the pooled validation log-likelihood."""
    notes = [] if notes is None else notes
    b = _scaled_bound(bound, phis)
    return _bounded_min(lambda e: -growth_loglik(e, models, phis, stats), b, tol,
                        "growth", notes)


def fit_epsilon_fecundity(models, Hs, stats, bound: float = 1.0, tol: float = 1e-8,
                          notes: list | None = None) -> float:
    """Shared fecundity ``eps`` minimising the pooled Poisson loss."""
    notes = [] if notes is None else notes
    b = _scaled_bound(bound, Hs)
    return _bounded_min(lambda e: fecundity_loss(e, models, Hs, stats), b, tol,
                        "fecundity", notes)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def _initial_model(train: Dataset, config: TmleConfig, levels):
    if config.initial == "empirical":
        return empirical_model(train, env_levels=levels, per_env=levels != (None,))
    fit = config.fit
    if fit.per_env is None:
        fit = FitConfig(**{**asdict(fit), "per_env": levels != (None,)})
    return estimate_model(train, fit, env_levels=None if levels == (None,) else levels)


def _evaluate(models, config):
    """Eigen-systems, gradient matrices and fold targets of every model."""
    coefs, values = [], []
    for m in models:
        eig = dominant_eigs(mean_kernel(m), check_primitive=False)
        c = coefficient_matrices(config.target, m, eig, config.env_weight_term)
        coefs.append(c)
        values.append(c.value)
    return coefs, values


def _validation_psi(dataset, models, coefs, val_sets, env_idx):
    n = dataset.n
    psi_g = np.full(n, np.nan)
    psi_f = np.full(n, np.nan)
    psi_e = np.full(n, np.nan)
    for m, c, idx in zip(models, coefs, val_sets):
        sub = dataset.subset(idx)
        g, f, e = eif_batch(c, m, sub, env_idx[idx])
        psi_g[idx], psi_f[idx], psi_e[idx] = g, f, e
    return psi_g, psi_f, psi_e


def _std_error(psi_total):
    ok = np.isfinite(psi_total)
    n = int(ok.sum())
    return float(math.sqrt(np.sum(psi_total[ok] ** 2)) / n)


def run_cv_tmle(dataset: Dataset, config: TmleConfig | None = None):
    """CV-TMLE estimate of ``config.target``; returns ``(TargetEstimate, TmleState)``."""
    config = config or TmleConfig()
    notes: list = []
    per_env = config.target == "log_lambda_s"
    if per_env and dataset.env is None:
        raise DataError("environment column required")
    levels = tuple(dataset.env_levels) if per_env else (None,)

    if config.use_cross_fit:
        folds = fold_labels(dataset.n, config.n_folds, config.seed)
        splits = [(np.flatnonzero(folds != v), np.flatnonzero(folds == v))
                  for v in range(config.n_folds)]
    else:
        folds = np.zeros(dataset.n, dtype=np.int64)
        everything = np.arange(dataset.n)
        splits = [(everything, everything)]

    models, val_sets, active = [], [], []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for v, (tr, va) in enumerate(splits):
            train = dataset.subset(tr)
            if not np.any(train.survived == 1):
                msg = f"fold {v} dropped: training data has no survivors"
                warnings.warn(msg, FoldDroppedWarning)
                continue
            try:
                model = _initial_model(train, config, levels)
            except EstimationError as exc:
                warnings.warn(f"fold {v} dropped: {exc}", FoldDroppedWarning)
                continue
            models.append(model)
            val_sets.append(va)
            active.append(v)
    for w in caught:
        msg = str(w.message)
        if msg not in notes:
            notes.append(msg)
        if issubclass(w.category, FoldDroppedWarning):
            warnings.warn(msg, FoldDroppedWarning, stacklevel=2)
    if not models:
        raise EstimationError("all folds dropped")

    model_env = models[0]
    env_idx = (env_indices(model_env, dataset) if model_env.has_env
               else np.zeros(dataset.n, dtype=np.int64))
    E = model_env.n_env
    stats = [_fold_stats(dataset, idx, env_idx, E) for idx in val_sets]
    state = TmleState(folds, models, active)
    state.initial_models = list(models)

    coefs, values = _evaluate(models, config)
    psi = _validation_psi(dataset, models, coefs, val_sets, env_idx)
    est_trace = [float(np.mean(values))]
    se_trace = [_std_error(sum(psi))]
    eps_trace: list = []

    n_iter = 0
    if math.isfinite(config.epsilon_tol):
        for _ in range(config.max_iterations):
            phis = [growth_phi(m, c) for m, c in zip(models, coefs)]
            eps1 = fit_epsilon_growth(models, phis, stats, config.epsilon_bound,
                                      config.brent_tol, notes)
            models = [tilt_growth(m, phi, eps1) for m, phi in zip(models, phis)]
            coefs, _ = _evaluate(models, config)
            Hs = [fecundity_h(m, c) for m, c in zip(models, coefs)]
            eps2 = fit_epsilon_fecundity(models, Hs, stats, config.epsilon_bound,
                                         config.brent_tol, notes)
            models = [tilt_fecundity(m, H, eps2) for m, H in zip(models, Hs)]
            n_iter += 1
            eps_trace.append((eps1, eps2))
            coefs, values = _evaluate(models, config)
            psi = _validation_psi(dataset, models, coefs, val_sets, env_idx)
            est_trace.append(float(np.mean(values)))
            se_trace.append(_std_error(sum(psi)))
            if max(abs(eps1), abs(eps2)) < config.epsilon_tol:
                state.converged = True
                break
    else:
        state.converged = True
    # carry the final values forward so traces always span max_iterations
    while len(est_trace) < config.max_iterations + 1:
        est_trace.append(est_trace[-1])
        se_trace.append(se_trace[-1])

    state.models = models
    state.epsilon_history = eps_trace
    total = sum(psi)
    se = se_trace[n_iter]
    est = est_trace[n_iter]
    result = TargetEstimate(
        target=config.target, estimate=est, std_error=se,
        ci_low=est - Z95 * se, ci_high=est + Z95 * se,
        initial=est_trace[0], initial_std_error=se_trace[0],
        psi_validation=total, estimate_trace=est_trace, std_error_trace=se_trace,
        epsilon_trace=[list(p) for p in eps_trace], fold_estimates=[float(x) for x in values],
        converged=state.converged, n_iterations=n_iter, warnings=notes)
    state.psi_growth, state.psi_fecundity, state.psi_env = psi
    return result, state
