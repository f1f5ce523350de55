"""Discretised projection kernels and their long-run targets.

A :class:`DemographicModel` stores, for every environment level, the full
conditional law of the next state given the current class (column 0 is
death) together with the expected recruit counts per destination class.
The projection kernel is ``K = G M + F`` with ``K[j, i]`` the contribution
of a class-``i`` individual to class ``j`` one step later.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import Dataset, SizeGrid
from .errors import DataError, EstimationError
from .kernels import kde_cdf_matrix_auto, power_iterate_auto
from .regress import (KdeFit, cv_bandwidth, fit_glm, rescale_unit)

logger = logging.getLogger(__name__)

TRANS_FLOOR = 1e-12
DEFAULT_BANDWIDTHS = (0.01, 0.02, 0.03, 0.05, 0.1)


class ReducibleKernelWarning(RuntimeWarning):
    pass


class PositivityWarning(RuntimeWarning):
    pass


@dataclass
class DemographicModel:
    """Estimated conditional law of one census step.

    Arrays carry a leading environment axis of length ``E`` (``E = 1`` and
    ``env_levels == (None,)`` when there is no environment):

    ``trans[e, i, j]``      P(Z*=j | Z=i+1, theta_e), ``j = 0`` is death
    ``fecundity[e, i, j]``  E(Y_{j+1} | Z=i+1, theta_e)
    ``marginal[e, i]``      P(Z=i+1 | theta_e) after flooring
    """

    trans: np.ndarray
    fecundity: np.ndarray
    marginal: np.ndarray
    env_levels: tuple = (None,)
    env_weights: np.ndarray = None
    supported: np.ndarray = None
    floored: np.ndarray = None
    notes: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.trans = np.asarray(self.trans, dtype=float)
        if self.trans.ndim == 2:
            self.trans = self.trans[None]
        E, N = self.trans.shape[:2]
        self.fecundity = np.asarray(self.fecundity, dtype=float).reshape(E, N, N)
        self.marginal = np.asarray(self.marginal, dtype=float).reshape(E, N)
        self.env_levels = tuple(self.env_levels)
        if len(self.env_levels) != E:
            raise ValueError("env_levels does not match the environment axis")
        if self.env_weights is None:
            self.env_weights = np.full(E, 1.0 / E)
        self.env_weights = np.asarray(self.env_weights, dtype=float).reshape(E)
        if self.supported is None:
            self.supported = np.ones((E, N), dtype=bool)
        if self.floored is None:
            self.floored = np.zeros((E, N), dtype=bool)

    @property
    def n_classes(self) -> int:
        return self.trans.shape[1]

    @property
    def n_env(self) -> int:
        return self.trans.shape[0]

    @property
    def has_env(self) -> bool:
        return not (self.n_env == 1 and self.env_levels[0] is None)

    def env_index(self, label) -> int:
        try:
            return self.env_levels.index(label)
        except ValueError:
            raise DataError(f"environment level {label!r} not in the model") from None

    def growth_survival(self, e: int = 0) -> np.ndarray:
        """The ``G M`` block: ``[j, i] = P(Z*=j | Z=i)`` for ``j >= 1``."""
        return self.trans[e, :, 1:].T

    def fecundity_matrix(self, e: int = 0) -> np.ndarray:
        """``F[j, i] = E(Y_j | Z=i)``."""
        return self.fecundity[e].T

    def survival(self, e: int = 0) -> np.ndarray:
        return 1.0 - self.trans[e, :, 0]

    def growth_given_survival(self, e: int = 0) -> np.ndarray:
        s = self.survival(e)
        with np.errstate(invalid="ignore", divide="ignore"):
            G = self.growth_survival(e) / s[None, :]
        return np.nan_to_num(G)

    def with_updates(self, **changes) -> "DemographicModel":
        return replace(self, notes=list(self.notes), meta=dict(self.meta), **changes)

    def validate(self, atol: float = 1e-12) -> None:
        if np.any(self.trans < 0) or np.any(self.fecundity < 0):
            raise EstimationError("negative probability or fecundity in model")
        if np.max(np.abs(self.trans.sum(axis=2) - 1.0)) > atol:
            raise EstimationError("transition rows do not sum to one")
        if np.max(np.abs(self.marginal.sum(axis=1) - 1.0)) > 1e-10:
            raise EstimationError("marginal does not sum to one")


@dataclass
class EigenSystem:
    """Dominant eigen-triple with ``sum(u) = 1`` and ``<v, u> = 1``."""

    lam: float
    u: np.ndarray
    v: np.ndarray
    residual_right: float
    residual_left: float
    iterations: int = 0


# ---------------------------------------------------------------------------
# Kernels and eigen-analysis
# ---------------------------------------------------------------------------

def kernel_matrix(model: DemographicModel, env=None) -> np.ndarray:
    """``K = G M + F`` for one environment (index or label; default first)."""
    if env is None:
        e = 0
    elif isinstance(env, (int, np.integer)) and not model.has_env:
        e = int(env)
    elif isinstance(env, (int, np.integer)) and env not in model.env_levels:
        e = int(env)
    else:
        e = model.env_index(env)
    return model.trans[e, :, 1:].T + model.fecundity[e].T


def mean_kernel(model: DemographicModel) -> np.ndarray:
    """Environment-weighted average kernel (equals K without environments)."""
    Ks = model.trans[:, :, 1:].transpose(0, 2, 1) + model.fecundity.transpose(0, 2, 1)
    return np.tensordot(model.env_weights, Ks, axes=1)


def is_primitive(K: np.ndarray) -> bool:
    """Whether some power ``K^m`` with ``m <= 2N`` is strictly positive."""
    N = K.shape[0]
    B = (K > 0).astype(np.int64)
    P = B.copy()
    power = 1
    while power < 2 * N:
        P = np.minimum(P @ P, 1)
        power *= 2
        if P.all():
            return True
    return bool(P.all())


def dominant_eigs(K, tol: float = 1e-12, max_iter: int = 100_000,
                  check_primitive: bool = True) -> EigenSystem:
    """Perron root and vectors of a nonnegative matrix by power iteration.

    The right vector is normalised to sum one, the left vector so that
    ``<v, u> = 1``; the eigenvalue is the two-sided Rayleigh quotient.
    """
    K = np.asarray(K, dtype=float)
    N = K.shape[0]
    if K.shape != (N, N):
        raise ValueError("K must be square")
    if np.any(K < 0):
        raise EstimationError("kernel has negative entries")
    if check_primitive and not is_primitive(K):
        warnings.warn("kernel is not primitive; dominant eigenvector may not be unique",
                      ReducibleKernelWarning, stacklevel=2)
    x0 = np.full(N, 1.0 / N)
    u, it_u, ok_u = power_iterate_auto(K, x0, tol, max_iter)
    v, it_v, ok_v = power_iterate_auto(np.ascontiguousarray(K.T), x0, tol, max_iter)
    if not (ok_u and ok_v):
        raise EstimationError("no real dominant eigenvalue (power iteration did not converge)")
    u = u / u.sum()
    vu = float(v @ u)
    if vu <= 0:
        raise EstimationError("no real dominant eigenvalue (orthogonal eigenvectors)")
    v = v / vu
    lam = float(v @ K @ u)
    scale = max(np.abs(K).sum(axis=1).max(), 1e-300)
    res_r = float(np.max(np.abs(K @ u - lam * u)))
    res_l = float(np.max(np.abs(v @ K - lam * v)))
    if max(res_r, res_l) > 1e-8 * scale:
        raise EstimationError("no real dominant eigenvalue (large eigen-residual)")
    return EigenSystem(lam, u, v, res_r, res_l, max(it_u, it_v))


def deflated_pinv(lam: float, K) -> np.ndarray:
    """Moore-Penrose inverse of ``lam I - K`` via SVD.

    Singular values below ``N * lam * 1e-12`` are treated as zero.
    """
    K = np.asarray(K, dtype=float)
    N = K.shape[0]
    A = lam * np.eye(N) - K
    U, s, Vt = np.linalg.svd(A)
    cutoff = N * abs(lam) * 1e-12
    inv = np.zeros_like(s)
    keep = s > cutoff
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T


# ---------------------------------------------------------------------------
# Targets
# ---------------------------------------------------------------------------

def target_lambda(model: DemographicModel, eig: EigenSystem | None = None) -> float:
    if eig is None:
        eig = dominant_eigs(mean_kernel(model), check_primitive=False)
    return eig.lam


def target_elasticity(model: DemographicModel, eig: EigenSystem | None = None) -> float:
    """``v' F u / (lam <v, u>)``: share of ``lam`` attributable to fecundity."""
    if eig is None:
        eig = dominant_eigs(mean_kernel(model), check_primitive=False)
    if eig.lam <= 1e-12:
        raise EstimationError("degenerate eigenvalue")
    F = np.tensordot(model.env_weights, model.fecundity.transpose(0, 2, 1), axes=1)
    return float(eig.v @ F @ eig.u / (eig.lam * (eig.v @ eig.u)))


def log_lambda_s_terms(model: DemographicModel, eig: EigenSystem | None = None) -> np.ndarray:
    """``v' K_theta u / v'u`` for each environment level (mean-kernel vectors)."""
    if eig is None:
        eig = dominant_eigs(mean_kernel(model), check_primitive=False)
    vu = float(eig.v @ eig.u)
    return np.array([eig.v @ kernel_matrix(model, e) @ eig.u / vu
                     for e in range(model.n_env)])


def target_log_lambda_s(model: DemographicModel, eig: EigenSystem | None = None) -> float:
    """Small-fluctuation approximation to the stochastic log growth rate."""
    c = log_lambda_s_terms(model, eig)
    if np.any(c <= 0):
        raise EstimationError("v' K_theta u <= 0 for some environment")
    return float(model.env_weights @ np.log(c))


TARGETS = {
    "lambda": target_lambda,
    "elasticity": target_elasticity,
    "log_lambda_s": target_log_lambda_s,
}


def evaluate_target(target: str, model: DemographicModel,
                    eig: EigenSystem | None = None) -> float:
    try:
        fn = TARGETS[target]
    except KeyError:
        raise ValueError(f"unknown target {target!r}") from None
    return fn(model, eig)


# ---------------------------------------------------------------------------
# Estimation from data
# ---------------------------------------------------------------------------

@dataclass
class FitConfig:
    """How plug-in models are built from individual records.

    ``bandwidth`` is on the [0, 1]-rescaled residual scale, or ``"cv"`` to
    pick one of ``bandwidth_candidates`` by held-out likelihood.
    ``env_effects`` controls how environment levels enter the regressions:
    ``"factor"`` (one dummy per level), ``"covariates"`` (the numeric
    covariates), ``"both"`` or ``"none"``.
    """

    bandwidth: float | str = 0.05
    bandwidth_candidates: Sequence[float] = DEFAULT_BANDWIDTHS
    cv_folds: int = 5
    seed: int = 0
    env_effects: str = "factor"
    split_seedling_survival: bool = True
    ridge: float = 1e-8
    per_env: bool | None = None


def class_representatives(dataset: Dataset) -> np.ndarray:
    """Mean observed size within each class (interval midpoint when empty)."""
    grid = dataset.grid
    N = grid.n_classes
    s = grid.split_points
    reps = np.empty(N)
    sums = np.bincount(dataset.z_class - 1, weights=dataset.z, minlength=N)
    counts = np.bincount(dataset.z_class - 1, minlength=N)
    step = np.diff(s).mean() if s.size > 1 else 1.0
    lower = np.concatenate(([s[0] - step], s))
    upper = np.concatenate((s, [s[-1] + step]))
    for i in range(N):
        if counts[i] > 0:
            reps[i] = sums[i] / counts[i]
        else:
            reps[i] = 0.5 * (lower[i] + upper[i])
    if grid.has_seedling_class:
        reps[0] = 0.0
    return reps


class _EnvDesign:
    """Environment columns for row-level fits and level-level prediction."""

    def __init__(self, dataset: Dataset, levels: tuple, effects: str):
        self.levels = levels
        self.has_env = dataset.env is not None and levels != (None,)
        self.use_factor = self.has_env and effects in ("factor", "both")
        self.use_cov = dataset.covariates.shape[1] > 0 and effects in ("covariates", "both")
        present = set(dataset.env.tolist()) if dataset.env is not None else set()
        self.dummy_levels = [lv for lv in levels[1:] if lv in present] if self.use_factor else []
        self.names = [f"env[{lv}]" for lv in self.dummy_levels]
        if self.use_cov:
            self.names += list(dataset.covariate_names)
        # level-wise covariate values (covariates are environment-level)
        self.level_cov = np.zeros((len(levels), dataset.covariates.shape[1]))
        if self.use_cov:
            pooled = dataset.covariates.mean(axis=0)
            for e, lv in enumerate(levels):
                rows = dataset.env == lv if dataset.env is not None else slice(None)
                sel = dataset.covariates[rows]
                self.level_cov[e] = sel.mean(axis=0) if len(sel) else pooled

    def rows(self, dataset: Dataset, idx=slice(None)) -> np.ndarray:
        cols = []
        if self.use_factor:
            env = dataset.env[idx]
            cols += [(env == lv).astype(float) for lv in self.dummy_levels]
        out = np.column_stack(cols) if cols else np.zeros((len(dataset.z[idx]), 0))
        if self.use_cov:
            out = np.column_stack([out, dataset.covariates[idx]])
        return out

    def level(self, e: int) -> np.ndarray:
        vals = []
        if self.use_factor:
            vals += [1.0 if self.levels[e] == lv else 0.0 for lv in self.dummy_levels]
        if self.use_cov:
            vals += list(self.level_cov[e])
        return np.asarray(vals, dtype=float)


def _floored_marginal(counts: np.ndarray, n: int):
    p = counts / max(n, 1)
    floor = 1.0 / (2.0 * max(n, 1))
    floored = p < floor
    p = np.maximum(p, floor)
    return p / p.sum(), floored


def _marginals(dataset: Dataset, levels: tuple):
    N = dataset.n_classes
    E = len(levels)
    marg = np.empty((E, N))
    floored = np.zeros((E, N), dtype=bool)
    weights = np.empty(E)
    for e, lv in enumerate(levels):
        rows = np.ones(dataset.n, dtype=bool) if lv is None else dataset.env == lv
        n_e = int(rows.sum())
        if n_e == 0:
            rows = np.ones(dataset.n, dtype=bool)
        counts = np.bincount(dataset.z_class[rows] - 1, minlength=N).astype(float)
        marg[e], floored[e] = _floored_marginal(counts, int(rows.sum()))
        weights[e] = n_e / dataset.n
    return marg, floored, weights


def _resolve_levels(dataset: Dataset, config_per_env, env_levels) -> tuple:
    per_env = dataset.env is not None if config_per_env is None else config_per_env
    if not per_env:
        return (None,)
    if dataset.env is None:
        raise DataError("environment column required")
    if env_levels is None:
        env_levels = dataset.env_levels
    return tuple(env_levels)


def _finish_trans(trans: np.ndarray) -> np.ndarray:
    trans = np.maximum(trans, TRANS_FLOOR)
    return trans / trans.sum(axis=-1, keepdims=True)


def estimate_model(dataset: Dataset, config: FitConfig | None = None,
                   env_levels: Sequence | None = None) -> DemographicModel:
    """Parametric-plus-KDE plug-in model.

    Growth: linear regression of next size on size among survivors, with
    the residual law estimated by a Gaussian KDE on [0, 1]-rescaled
    residuals and integrated exactly over destination class intervals.
    Survival: logistic regression (separate seedling model when the grid
    has a seedling class).  Recruits: Poisson regressions, one for
    seedling recruits and one for the rest with the destination size as a
    covariate.  Marginal: floored class frequencies.
    """
    config = config or FitConfig()
    grid = dataset.grid
    N = grid.n_classes
    levels = _resolve_levels(dataset, config.per_env, env_levels)
    E = len(levels)
    envd = _EnvDesign(dataset, levels, config.env_effects if levels != (None,) else "none")
    reps = class_representatives(dataset)
    notes = []
    counts = np.bincount(dataset.z_class - 1, minlength=N)
    cls_rows = [np.flatnonzero(dataset.z_class == i + 1) for i in range(N)]

    # --- growth -----------------------------------------------------------
    alive = np.flatnonzero(dataset.survived == 1)
    if alive.size == 0:
        raise EstimationError("no survivors in the data: growth model undefined")
    Xg = np.column_stack([dataset.z[alive], envd.rows(dataset, alive)])
    names_g = ["z"] + envd.names
    if alive.size <= Xg.shape[1] + 1:
        # too few survivors for slopes: intercept-only shift model
        resid_src = dataset.z_next[alive] - dataset.z[alive]
        beta = np.concatenate(([resid_src.mean(), 1.0], np.zeros(Xg.shape[1] - 1)))
        notes.append("growth fit degenerate: identity-slope model used")
    else:
        g_fit = fit_glm("gaussian", dataset.z_next[alive], Xg, names_g, ridge=config.ridge)
        beta = g_fit.coefficients
    resid = dataset.z_next[alive] - (beta[0] + Xg @ beta[1:])
    scaled, lo, width = rescale_unit(resid)
    if config.bandwidth == "cv":
        h = cv_bandwidth(scaled, config.bandwidth_candidates, config.cv_folds, config.seed)
    else:
        h = float(config.bandwidth)
    kde = KdeFit(scaled, h, lo, width)
    growth = np.empty((E, N, N))
    edges = (grid.split_points - lo) / width
    for e in range(E):
        lvl = envd.level(e)
        locs = (beta[0] + reps * beta[1] + (lvl @ beta[2:] if lvl.size else 0.0)) / width
        cdf = kde_cdf_matrix_auto(locs, edges, kde.sample, h)
        full = np.column_stack([np.zeros(N), cdf, np.ones(N)])
        growth[e] = np.diff(full, axis=1)

    # --- survival ---------------------------------------------------------
    surv = np.empty((E, N))
    seed_split = (config.split_seedling_survival and grid.has_seedling_class)
    seed_rows = dataset.z_class == 1 if seed_split else np.zeros(dataset.n, dtype=bool)
    models = []
    if seed_split and seed_rows.sum() >= 1:
        Xs = envd.rows(dataset, np.flatnonzero(seed_rows))
        fs = _fit_or_constant("binomial", dataset.survived[seed_rows], Xs, envd.names,
                              config.ridge)
        models.append(("seedling", fs))
    rest = ~seed_rows if seed_split and seed_rows.sum() >= 1 else np.ones(dataset.n, dtype=bool)
    Xn = np.column_stack([dataset.z[rest], envd.rows(dataset, np.flatnonzero(rest))])
    fn = _fit_or_constant("binomial", dataset.survived[rest], Xn, ["z"] + envd.names,
                          config.ridge)
    for e in range(E):
        lvl = envd.level(e)
        for i in range(N):
            zs = dataset.z[cls_rows[i]] if counts[i] else np.array([reps[i]])
            if seed_split and i == 0 and models:
                X = np.tile(lvl, (zs.size, 1))
                surv[e, i] = models[0][1].predict(X).mean()
            else:
                X = np.column_stack([zs, np.tile(lvl, (zs.size, 1))])
                surv[e, i] = fn.predict(X).mean()

    # --- fecundity ---------------------------------------------------------
    fec = _fit_fecundity(dataset, envd, reps, cls_rows, counts, E, config.ridge)

    trans = np.empty((E, N, N + 1))
    trans[:, :, 0] = 1.0 - surv
    trans[:, :, 1:] = surv[:, :, None] * growth
    trans = _finish_trans(trans)

    marg, floored, weights = _marginals(dataset, levels)
    if floored.any():
        msg = f"positivity: {int(floored.sum())} class marginal(s) floored at 1/(2n)"
        warnings.warn(msg, PositivityWarning, stacklevel=2)
        notes.append(msg)
    model = DemographicModel(trans, fec, marg, levels, weights,
                             supported=np.broadcast_to(counts > 0, (E, N)).copy(),
                             floored=floored, notes=notes,
                             meta={"bandwidth": h, "kind": "parametric"})
    model.validate()
    return model


def _fit_or_constant(family, y, X, names, ridge):
    y = np.asarray(y, dtype=float)
    if y.size <= X.shape[1] + 1 or np.all(y == y[0]):
        from .regress import GlmFit
        mean = float(np.clip(y.mean(), 1e-12, 1 - 1e-12)) if family == "binomial" else y.mean()
        link = np.log(mean / (1 - mean)) if family == "binomial" else np.log(max(mean, 1e-300))
        coefs = np.concatenate(([link], np.zeros(X.shape[1])))
        return GlmFit(family, coefs, ("(Intercept)",) + tuple(names), True, 0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fit_glm(family, y, X, names, ridge=ridge)


def _fit_fecundity(dataset, envd, reps, cls_rows, counts, E, ridge):
    """Poisson recruit models; returns Q[e, i, j] = E(Y_{j+1} | class i+1)."""
    N = dataset.n_classes
    grid = dataset.grid
    Y = dataset.offspring
    env_rows = envd.rows(dataset)
    Q = np.zeros((E, N, N))
    first = 1 if grid.has_seedling_class else 0
    blocks = []
    if grid.has_seedling_class:
        blocks.append(("seedling", [0]))
    blocks.append(("sized", list(range(first, N))))
    for name, dest in blocks:
        ysub = Y[:, dest]
        if ysub.sum() == 0:
            continue
        with_dest = len(dest) > 1
        n = dataset.n
        z_col = np.repeat(dataset.z, len(dest))
        cols = [z_col]
        names = ["z"]
        if with_dest:
            cols.append(np.tile(reps[dest], n))
            names.append("z_recruit")
        if env_rows.shape[1]:
            cols.append(np.repeat(env_rows, len(dest), axis=0))
            names += envd.names
        X = np.column_stack(cols)
        fit = _fit_or_constant("poisson", ysub.ravel(), X, names, ridge)
        b = fit.coefficients
        for e in range(E):
            lvl = envd.level(e)
            eta_env = b[0] + (lvl @ b[len(b) - lvl.size:] if lvl.size else 0.0)
            dest_eff = b[2] * reps[dest] if with_dest else np.zeros(len(dest))
            for i in range(N):
                zs = dataset.z[cls_rows[i]] if counts[i] else np.array([reps[i]])
                size_eff = np.mean(np.exp(np.minimum(b[1] * zs, 700.0)))
                Q[e, i, dest] = np.exp(np.minimum(eta_env + dest_eff, 700.0)) * size_eff
    return Q


def empirical_model(dataset: Dataset, env_levels: Sequence | None = None,
                    per_env: bool | None = None) -> DemographicModel:
    """Saturated model: observed transition frequencies and recruit means.

    Classes never observed as a source get an all-death row and zero
    recruits; they are reported in ``supported`` and in ``notes``.
    """
    N = dataset.n_classes
    levels = _resolve_levels(dataset, per_env, env_levels)
    E = len(levels)
    trans = np.zeros((E, N, N + 1))
    fec = np.zeros((E, N, N))
    supported = np.zeros((E, N), dtype=bool)
    for e, lv in enumerate(levels):
        rows = np.ones(dataset.n, dtype=bool) if lv is None else dataset.env == lv
        zc = dataset.z_class[rows] - 1
        zn = dataset.z_next_class[rows]
        np.add.at(trans[e], (zc, zn), 1.0)
        np.add.at(fec[e], zc, dataset.offspring[rows].astype(float))
        n_i = trans[e].sum(axis=1)
        supported[e] = n_i > 0
        trans[e, ~supported[e], 0] = 1.0
        n_i = np.maximum(trans[e].sum(axis=1), 1.0)
        trans[e] /= n_i[:, None]
        fec[e] /= np.maximum(np.bincount(zc, minlength=N), 1)[:, None]
    notes = []
    if not supported.all():
        missing = [int(i) + 1 for i in np.flatnonzero(~supported.all(axis=0))]
        msg = f"positivity: classes never observed as a source: {missing}"
        warnings.warn(msg, PositivityWarning, stacklevel=2)
        notes.append(msg)
    marg, floored, weights = _marginals(dataset, levels)
    return DemographicModel(trans, fec, marg, levels, weights, supported, floored, notes,
                            meta={"kind": "empirical"})


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def write_matrix_csv(M, path) -> None:
    """Row-major CSV with header ``j\\i, 1..N``; row ``j`` is destination."""
    M = np.asarray(M, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j\\i"] + [str(i) for i in range(1, M.shape[1] + 1)])
        for j in range(M.shape[0]):
            w.writerow([str(j + 1)] + [repr(float(x)) for x in M[j]])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(x) for x in r[1:]] for r in rows[1:]])


def model_to_json(model: DemographicModel) -> dict:
    return {
        "env_levels": [None if lv is None else str(lv) for lv in model.env_levels],
        "env_weights": model.env_weights.tolist(),
        "GM": [model.growth_survival(e).tolist() for e in range(model.n_env)],
        "F": [model.fecundity_matrix(e).tolist() for e in range(model.n_env)],
        "marginal": model.marginal.tolist(),
        "meta": {k: v for k, v in model.meta.items() if isinstance(v, (int, float, str))},
    }


def write_model_json(model: DemographicModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh, indent=1)
