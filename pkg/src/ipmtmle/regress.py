"""GLMs fitted by IRLS and a one-dimensional Gaussian KDE.

These are the building blocks for plug-in demographic models: a linear
model for growth, logistic regression for survival, Poisson regression
for recruit counts and a kernel density for growth residuals.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit, gammaln, xlogy

from .errors import DataError
from .kernels import kde_pdf_auto

logger = logging.getLogger(__name__)

FAMILIES = ("gaussian", "binomial", "poisson")
PROB_CAP = 1e-12
LOG_DENSITY_FLOOR = math.log(1e-300)


@dataclass
class GlmFit:
    family: str
    coefficients: np.ndarray
    names: tuple = ()
    converged: bool = True
    n_iterations: int = 0
    deviance: float = float("nan")
    design_info: dict = field(default_factory=dict)

    def linear_predictor(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.coefficients[0] + X @ self.coefficients[1:]

    def predict(self, X) -> np.ndarray:
        """Mean response for covariate rows ``X`` (no intercept column)."""
        eta = self.linear_predictor(X)
        return _inverse_link(self.family, eta)


def _inverse_link(family, eta):
    if family == "gaussian":
        return eta
    if family == "binomial":
        return np.clip(expit(eta), PROB_CAP, 1.0 - PROB_CAP)
    return np.exp(np.minimum(eta, 700.0))


def _deviance(family, y, mu, w):
    if family == "gaussian":
        return float(np.sum(w * (y - mu) ** 2))
    if family == "binomial":
        return float(2.0 * np.sum(w * (xlogy(y, y / mu) + xlogy(1 - y, (1 - y) / (1 - mu)))))
    return float(2.0 * np.sum(w * (xlogy(y, y / mu) - (y - mu))))


def log_likelihood(family, y, mu, w=None) -> float:
    """Family log-likelihood (gaussian with unit variance, up to a constant)."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    if family == "gaussian":
        return float(-0.5 * np.sum(w * (y - mu) ** 2))
    if family == "binomial":
        return float(np.sum(w * (xlogy(y, mu) + xlogy(1 - y, 1 - mu))))
    return float(np.sum(w * (xlogy(y, mu) - mu - gammaln(y + 1))))


def _check_rank(Xd, names):
    """Raise naming the first column that adds nothing to the column space."""
    scale = np.linalg.norm(Xd, axis=0)
    scale[scale == 0] = 1.0
    Z = Xd / scale
    if np.linalg.matrix_rank(Z) == Z.shape[1]:
        return
    for k in range(1, Z.shape[1] + 1):
        if np.linalg.matrix_rank(Z[:, :k]) < k:
            raise DataError(f"rank-deficient design: column {names[k - 1]!r} is collinear "
                            "with earlier columns")


def fit_glm(family: str, responses, design_matrix, names: Sequence[str] | None = None,
            weights=None, ridge: float = 1e-8, tol: float = 1e-10,
            max_iter: int = 100, offset=None) -> GlmFit:
    """Maximum-likelihood GLM via iteratively reweighted least squares.

    ``design_matrix`` holds the covariates only; an intercept is prepended
    and reported first.  ``ridge`` is a tiny quadratic penalty on the slopes
    for conditioning, not a modelling choice.  Convergence is declared when
    the relative deviance change drops below ``tol``.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    y = np.asarray(responses, dtype=float).ravel()
    X = np.asarray(design_matrix, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.size:
        raise DataError(f"design has {X.shape[0]} rows for {y.size} responses")
    if y.size == 0:
        raise DataError("no observations to fit")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float).ravel()
    off = np.zeros_like(y) if offset is None else np.asarray(offset, dtype=float).ravel()
    if family == "binomial" and not np.all(np.isin(y, (0.0, 1.0))):
        raise DataError("binomial responses must be 0 or 1")
    if family == "poisson" and (np.any(y < 0) or np.any(y != np.round(y))):
        raise DataError("poisson responses must be nonnegative integers")

    names = tuple(names) if names is not None else tuple(f"x{k}" for k in range(X.shape[1]))
    names = ("(Intercept)",) + names
    Xd = np.column_stack([np.ones(y.size), X])
    _check_rank(Xd, names)
    p = Xd.shape[1]
    penalty = np.full(p, ridge)
    penalty[0] = 0.0

    if family == "gaussian":
        XtW = Xd.T * w
        beta = np.linalg.solve(XtW @ Xd + np.diag(penalty), XtW @ (y - off))
        mu = Xd @ beta + off
        return GlmFit(family, beta, names, True, 1, _deviance(family, y, mu, w),
                      {"columns": names})

    ybar = float(np.average(y, weights=w))
    if family == "binomial":
        mu = np.clip((w * y + 0.5) / (w + 1.0), 0.01, 0.99)
        eta = np.log(mu / (1 - mu))
    else:
        mu = (y + max(ybar, 0.1)) / 2.0
        eta = np.log(mu)
    dev_old = _deviance(family, y, mu, w)
    beta = np.zeros(p)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if family == "binomial":
            var = mu * (1 - mu)
        else:
            var = mu
        var = np.maximum(var, 1e-300)
        z = eta - off + (y - mu) / var
        wk = w * var
        XtW = Xd.T * wk
        beta = np.linalg.solve(XtW @ Xd + np.diag(penalty), XtW @ z)
        eta = Xd @ beta + off
        mu = _inverse_link(family, eta)
        dev = _deviance(family, y, mu, w)
        if abs(dev - dev_old) < tol * (abs(dev) + 0.1):
            converged = True
            break
        dev_old = dev

    if family == "binomial" and np.max(np.abs(eta)) > 30.0:
        warnings.warn("logistic fit separated: fitted probabilities pinned at 0/1",
                      RuntimeWarning, stacklevel=2)
        converged = False
    elif not converged:
        warnings.warn(f"IRLS did not converge in {max_iter} iterations",
                      RuntimeWarning, stacklevel=2)
    return GlmFit(family, beta, names, converged, it, dev, {"columns": names})


def glm_score(fit: GlmFit, responses, design_matrix, weights=None) -> np.ndarray:
    """Gradient of the log-likelihood at the fitted coefficients."""
    y = np.asarray(responses, dtype=float).ravel()
    X = np.asarray(design_matrix, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Xd = np.column_stack([np.ones(y.size), X])
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    mu = _inverse_link(fit.family, Xd @ fit.coefficients)
    return Xd.T @ (w * (y - mu))


# ---------------------------------------------------------------------------
# Kernel density
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KdeFit:
    """Gaussian KDE on the scale of ``sample``.

    ``lo`` and ``width`` record the affine map that produced ``sample`` from
    raw values (``sample = (raw - lo) / width``) so densities of raw values
    can be recovered.
    """

    sample: np.ndarray
    bandwidth: float
    lo: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        object.__setattr__(self, "sample", np.asarray(self.sample, dtype=float).ravel())

    def raw_density(self, x):
        """Density of the raw (unscaled) variable at ``x``."""
        return kde_density(self, (np.asarray(x, dtype=float) - self.lo) / self.width) / self.width


def rescale_unit(values):
    """Affinely map ``values`` onto [0, 1]; returns (scaled, lo, width)."""
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    width = hi - lo
    if width <= 0:
        width = 1.0
    return (v - lo) / width, lo, width


def kde_density(fit: KdeFit, x):
    """(1/(m h)) * sum_i phi((x - s_i) / h); scalar in, scalar out."""
    out = kde_pdf_auto(x, fit.sample, fit.bandwidth)
    if np.ndim(x) == 0:
        return float(out[0])
    return out.reshape(np.shape(x))


def fold_labels(n: int, n_folds: int, seed) -> np.ndarray:
    """Balanced fold labels in a seeded random order (sizes differ by <= 1)."""
    rng = np.random.default_rng(seed)
    labels = np.empty(n, dtype=np.int64)
    labels[rng.permutation(n)] = np.arange(n) % n_folds
    return labels


def cv_scores(sample, candidates, n_folds: int = 5, seed=0, folds=None) -> np.ndarray:
    """Mean held-out log density for each candidate bandwidth."""
    x = np.asarray(sample, dtype=float).ravel()
    if folds is None:
        folds = fold_labels(x.size, n_folds, seed)
    folds = np.asarray(folds)
    scores = np.zeros(len(candidates))
    levels = np.unique(folds)
    for c, h in enumerate(candidates):
        fold_means = []
        for f in levels:
            test, train = x[folds == f], x[folds != f]
            if train.size == 0 or test.size == 0:
                continue
            dens = kde_pdf_auto(test, train, h)
            logd = np.log(np.maximum(dens, 1e-300))
            fold_means.append(np.maximum(logd, LOG_DENSITY_FLOOR).mean())
        scores[c] = np.mean(fold_means)
    return scores


def cv_bandwidth(sample, candidates, n_folds: int = 5, seed=0, folds=None) -> float:
    """Candidate with the best held-out log-likelihood; ties go to the smaller."""
    cands = sorted(float(h) for h in candidates)
    if not cands:
        raise ValueError("no candidate bandwidths")
    if n_folds < 2 and folds is None:
        raise ValueError("need at least two folds")
    if len(cands) == 1:
        return cands[0]
    scores = cv_scores(sample, cands, n_folds, seed, folds)
    best = 0
    for c in range(1, len(cands)):
        if scores[c] > scores[best]:
            best = c
    logger.debug("cv bandwidth scores %s -> %s", dict(zip(cands, scores)), cands[best])
    return cands[best]
