"""Numeric inner loops.

Each kernel exists twice: a numba-compiled loop and a broadcasting numpy
version.  The module-level names (``kde_cdf_matrix``, ``kde_pdf``,
``power_iterate``) point at the compiled loop when JIT is enabled and at
the numpy version otherwise.  Both variants stay importable so they can
be benchmarked and cross-checked against each other.
"""

import math

import numpy as np

from ._accel import NUMBA_ENABLED, njit

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Gaussian KDE cumulative mass at shifted edges
# ---------------------------------------------------------------------------

@njit
def _kde_cdf_matrix_jit(locs, edges, sample, h):
    n_loc = locs.shape[0]
    n_edge = edges.shape[0]
    m = sample.shape[0]
    out = np.empty((n_loc, n_edge))
    scale = 1.0 / (h * _SQRT2)
    for a in range(n_loc):
        for e in range(n_edge):
            base = edges[e] - locs[a]
            acc = 0.0
            for k in range(m):
                acc += math.erfc(-(base - sample[k]) * scale)
            out[a, e] = 0.5 * acc / m
    return out


def _kde_cdf_matrix_numpy(locs, edges, sample, h):
    from scipy.special import ndtr

    locs = np.asarray(locs, dtype=float)
    edges = np.asarray(edges, dtype=float)
    sample = np.asarray(sample, dtype=float)
    out = np.empty((locs.size, edges.size))
    for a, loc in enumerate(locs):
        z = (edges[:, None] - loc - sample[None, :]) / h
        out[a] = ndtr(z).mean(axis=1)
    return out


# ---------------------------------------------------------------------------
# Gaussian KDE density
# ---------------------------------------------------------------------------

@njit
def _kde_pdf_jit(x, sample, h):
    n = x.shape[0]
    m = sample.shape[0]
    out = np.empty(n)
    inv_h = 1.0 / h
    for a in range(n):
        acc = 0.0
        for k in range(m):
            d = (x[a] - sample[k]) * inv_h
            acc += math.exp(-0.5 * d * d)
        out[a] = acc * _INV_SQRT_2PI * inv_h / m
    return out


def _kde_pdf_numpy(x, sample, h, chunk=4096):
    x = np.asarray(x, dtype=float)
    sample = np.asarray(sample, dtype=float)
    out = np.empty(x.size)
    for start in range(0, x.size, chunk):
        d = (x[start:start + chunk, None] - sample[None, :]) / h
        out[start:start + chunk] = np.exp(-0.5 * d * d).mean(axis=1)
    return out * _INV_SQRT_2PI / h


# ---------------------------------------------------------------------------
# Power iteration with sum-normalisation
# ---------------------------------------------------------------------------

@njit
def _power_iterate_jit(A, x0, tol, max_iter):
    n = A.shape[0]
    x = x0.copy()
    y = np.empty(n)
    for it in range(1, max_iter + 1):
        total = 0.0
        for r in range(n):
            acc = 0.0
            for c in range(n):
                acc += A[r, c] * x[c]
            y[r] = acc
            total += acc
        if total == 0.0 or not np.isfinite(total):
            return x, it, False
        change = 0.0
        for r in range(n):
            y[r] /= total
            d = abs(y[r] - x[r])
            if d > change:
                change = d
        for r in range(n):
            x[r] = y[r]
        if change < tol:
            return x, it, True
    return x, max_iter, False


def _power_iterate_numpy(A, x0, tol, max_iter):
    x = np.array(x0, dtype=float)
    for it in range(1, max_iter + 1):
        y = A @ x
        total = y.sum()
        if total == 0.0 or not np.isfinite(total):
            return x, it, False
        y /= total
        change = np.max(np.abs(y - x))
        x = y
        if change < tol:
            return x, it, True
    return x, max_iter, False


if NUMBA_ENABLED:
    kde_cdf_matrix = _kde_cdf_matrix_jit
    kde_pdf = _kde_pdf_jit
    power_iterate = _power_iterate_jit
else:
    kde_cdf_matrix = _kde_cdf_matrix_numpy
    kde_pdf = _kde_pdf_numpy
    power_iterate = _power_iterate_numpy


def kde_cdf_matrix_auto(locs, edges, sample, h):
    """C[a, e] = mean_k Phi((edges[e] - locs[a] - sample[k]) / h).

    The Gaussian-KDE probability that ``loc + residual <= edge``;
    differencing along ``e`` gives the mass between consecutive edges.
    """
    return kde_cdf_matrix(
        np.ascontiguousarray(locs, dtype=float),
        np.ascontiguousarray(edges, dtype=float),
        np.ascontiguousarray(sample, dtype=float),
        float(h),
    )


def kde_pdf_auto(x, sample, h):
    return kde_pdf(
        np.ascontiguousarray(np.atleast_1d(x), dtype=float),
        np.ascontiguousarray(sample, dtype=float),
        float(h),
    )


def power_iterate_auto(A, x0, tol, max_iter):
    return power_iterate(
        np.ascontiguousarray(A, dtype=float),
        np.ascontiguousarray(x0, dtype=float),
        float(tol),
        int(max_iter),
    )
