"""Synthetic designs with exactly computable population laws.

Three designs are provided:

``basic``
    Seedling/Beta(2,2) size mixture, linear growth with a Beta(8,8)
    increment, logistic survival and Poisson recruitment.
``idaho_like``
    Year-structured version with climate covariates, separate seedling
    survival and quadrat-level recruitment shared among the non-seedling
    plants of a quadrat in proportion to the square root of their area.
``rotifer_like``
    64 (maternal group x age) states with survival along the age
    sub-diagonal and recruits entering age 1 of the group fixed by the
    mother's age.

For each design :func:`truth_model` builds the population-level
:class:`DemographicModel` on the design grid by quadrature, so targets can
be evaluated without Monte Carlo error.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.special import expit, roots_jacobi, roots_laguerre, roots_legendre

from .data import Dataset, SizeGrid, build_quantile_grid, integer_grid
from .demography import DemographicModel, evaluate_target
from .errors import ConfigError

DESIGNS = ("basic", "idaho_like", "rotifer_like")
N_NODES = 48


def default_recruit_probs(n_classes: int) -> list:
    """90% seedlings, 1% to each of the next ten classes."""
    p = np.zeros(n_classes)
    p[0] = 0.9
    k = min(10, n_classes - 1)
    p[1:1 + k] = 0.01
    return (p / p.sum()).tolist()


BASIC_DEFAULTS = {
    "seedling_prob": 0.35,
    "size_beta": [2.0, 2.0],
    "growth_slope": 0.8,
    "growth_scale": 0.2,
    "growth_beta": [8.0, 8.0],
    "survival": [0.1, 7.0],
    "fecundity": [-3.0, 1.0],
    "recruit_probs": None,
}

_IDAHO_COVARIATES = ("ppt1", "ppt2", "TmeanSpr1", "TmeanSpr2", "pptLag")

# Illustrative defaults: chosen to give plausible shrub-like dynamics.  They
# are not estimates from any real data set.
IDAHO_DEFAULTS = {
    "provenance": "illustrative defaults",
    "seedling_prob": 0.3,
    "size_beta": [1.5, 3.0],
    "years": {
        "labels": ["y1", "y2", "y3", "y4", "y5"],
        "probs": [0.2, 0.2, 0.2, 0.2, 0.2],
        "covariates": {
            "ppt1": [0.5, -1.0, 0.2, 1.2, -0.9],
            "ppt2": [-0.3, 0.5, -1.1, 0.8, 0.1],
            "TmeanSpr1": [0.9, -0.4, 0.1, -1.3, 0.7],
            "TmeanSpr2": [-0.2, 1.1, -0.7, 0.3, -0.5],
            "pptLag": [0.4, -0.6, 1.0, -0.2, -0.6],
        },
    },
    "growth": {
        "intercept": 0.06, "z": 0.8,
        "year": [0.0, 0.01, -0.01, 0.02, -0.015],
        "covariates": {"ppt1": 0.008, "ppt2": 0.004, "TmeanSpr1": -0.004,
                       "TmeanSpr2": -0.002, "pptLag": 0.003},
        "resid_beta": [6.0, 6.0], "resid_lo": -0.1, "resid_width": 0.2,
    },
    "survival_seedling": {
        "intercept": -0.4,
        "year": [0.0, 0.3, -0.3, 0.2, -0.2],
        "covariates": {"ppt1": 0.15, "ppt2": 0.05, "TmeanSpr1": -0.1,
                       "TmeanSpr2": 0.0, "pptLag": 0.05},
    },
    "survival_nonseedling": {
        "intercept": 0.3, "z": 5.0,
        "year": [0.0, 0.2, -0.2, 0.1, -0.1],
        "covariates": {"ppt1": 0.1, "ppt2": 0.05, "TmeanSpr1": -0.05,
                       "TmeanSpr2": 0.0, "pptLag": 0.05},
    },
    "fecundity": {
        "quadrat_size": 20,
        "intercept": 1.6,
        "year": [0.0, 0.25, -0.25, 0.15, -0.15],
        "covariates": {"ppt1": 0.1, "ppt2": 0.05, "TmeanSpr1": 0.0,
                       "TmeanSpr2": 0.0, "pptLag": 0.05},
        "area_scale": 4.0,
        "recruit_probs": None,
    },
}

IDAHO_BLOCKS = ("years", "growth", "survival_seedling", "survival_nonseedling", "fecundity")


def _rotifer_group(age: int) -> int:
    """Maternal group (1..4) of offspring born to a mother of ``age``."""
    if age <= 4:
        return 1
    if age <= 6:
        return 2
    if age <= 8:
        return 3
    return 4


def _rotifer_default_rates():
    ages = np.arange(1, 17)
    surv = np.empty((4, 16))
    fert = np.empty((4, 16))
    for m in range(4):
        surv[m] = np.clip(0.97 - 0.004 * (ages - 1) ** 1.6 * (1.0 + 0.15 * m), 0.05, 0.99)
        fert[m] = np.where(ages >= 2, 2.8 * np.exp(-((ages - 6.0) / 4.0) ** 2), 0.0)
        fert[m] *= 1.0 - 0.1 * m
    surv[:, 15] = 0.0
    return surv.tolist(), fert.tolist()


_RS, _RF = _rotifer_default_rates()
ROTIFER_DEFAULTS = {
    "survival": _RS,
    "fertility": _RF,
    "marginal": None,
}


@dataclass
class SimSpec:
    """A synthetic design.

    ``grid="sample"`` discretises each draw at its own sample quantiles, so
    every class is populated and the truth is computed on that grid;
    ``grid="true"`` uses the population quantiles of the size law instead
    (one grid and one truth for all draws, at the price of near-empty
    classes in small training folds).
    """

    design: str = "basic"
    n: int = 1000
    n_classes: int = 100
    seed: int = 0
    grid: str = "sample"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ConfigError(f"unknown design {self.design!r}")
        if self.grid not in ("true", "sample"):
            raise ConfigError(f"grid must be 'true' or 'sample', not {self.grid!r}")
        if self.design == "rotifer_like":
            self.n_classes = 64
        if self.n < 1:
            raise ConfigError("n must be positive")

    def resolved_params(self) -> dict:
        if self.design == "basic":
            p = {**BASIC_DEFAULTS, **self.params}
        elif self.design == "idaho_like":
            if not self.params:
                p = copy.deepcopy(IDAHO_DEFAULTS)
            else:
                for block in IDAHO_BLOCKS:
                    if block not in self.params:
                        raise ConfigError(f"idaho_like config is missing the {block!r} block")
                p = {**{k: IDAHO_DEFAULTS[k] for k in ("seedling_prob", "size_beta")},
                     **copy.deepcopy(self.params)}
        else:
            p = {**ROTIFER_DEFAULTS, **self.params}
        return p

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SimSpec":
        return cls(**d)


# ---------------------------------------------------------------------------
# Quadrature helpers
# ---------------------------------------------------------------------------

def true_grid(spec: SimSpec) -> SizeGrid:
    """Seedling split at 0 plus the population quantiles of the Beta part."""
    if spec.design == "rotifer_like":
        return integer_grid(64)
    a, b = spec.resolved_params()["size_beta"]
    k = np.arange(1, spec.n_classes - 1)
    q = stats.beta.ppf(k / (spec.n_classes - 1), a, b)
    return SizeGrid(np.concatenate(([0.0], q)), has_seedling_class=True)


def _class_quadrature(grid: SizeGrid, a: float, b: float, n_nodes: int = N_NODES):
    """Nodes and normalised weights of the Beta(a, b) law within each class.

    Row ``k`` covers class ``k + 2`` (the seedling class is a point mass).
    End classes use Gauss-Jacobi rules so the endpoint behaviour of the
    density is integrated exactly.
    """
    s = grid.split_points
    edges = np.concatenate((s, [1.0]))
    lows, highs = edges[:-1], edges[1:]
    nodes = np.empty((lows.size, n_nodes))
    weights = np.empty_like(nodes)
    xl, wl = roots_legendre(n_nodes)
    for k, (lo, hi) in enumerate(zip(lows, highs)):
        half = 0.5 * (hi - lo)
        if lo == 0.0:
            y, w = roots_jacobi(n_nodes, 0.0, a - 1.0)       # (1 + y)^(a-1)
            x = lo + half * (y + 1.0)
            f = (1.0 - x) ** (b - 1.0)
        elif hi == 1.0:
            y, w = roots_jacobi(n_nodes, b - 1.0, 0.0)       # (1 - y)^(b-1)
            x = lo + half * (y + 1.0)
            f = x ** (a - 1.0)
        else:
            x = lo + half * (xl + 1.0)
            w = wl
            f = stats.beta.pdf(x, a, b)
        ww = w * f
        nodes[k] = x
        weights[k] = ww / ww.sum()
    return nodes, weights


def _beta_expectation_rule(a: float, b: float, n_nodes: int = 96):
    """Gauss-Jacobi nodes/weights for expectations under Beta(a, b)."""
    y, w = roots_jacobi(n_nodes, b - 1.0, a - 1.0)
    return 0.5 * (y + 1.0), w / w.sum()


def _dest_edges(grid: SizeGrid) -> np.ndarray:
    return grid.split_points


def _assemble(grid, s_fn, cdf_fn, fec_fn, recruit_probs, seedling_prob, a, b, n_env=1):
    """Population-law trans/Q/marginal from per-size survival, growth, recruits.

    ``s_fn(z, e)`` survival probability, ``cdf_fn(c, z, e)`` growth CDF of
    the next size (broadcasting ``c`` against ``z``) and ``fec_fn(z, e)``
    expected total recruits.  Destination class 1 (exact zero) receives no
    survivors; the mass below the first positive split goes to class 2.
    """
    N = grid.n_classes
    nodes, weights = _class_quadrature(grid, a, b)
    z_nodes = np.vstack([np.zeros((1, nodes.shape[1])), nodes])
    w_nodes = np.vstack([np.eye(1, nodes.shape[1]), weights])
    inner = _dest_edges(grid)[1:]                       # positive splits
    trans = np.zeros((n_env, N, N + 1))
    fec = np.zeros((n_env, N, N))
    rp = np.asarray(recruit_probs, dtype=float)
    for e in range(n_env):
        s = s_fn(z_nodes, e)                            # (N, m)
        cdf = cdf_fn(inner[None, None, :], z_nodes[:, :, None], e)
        cdf = np.concatenate([np.zeros(cdf.shape[:2] + (1,)), cdf,
                              np.ones(cdf.shape[:2] + (1,))], axis=2)
        grow = np.diff(cdf, axis=2)                     # classes 2..N
        trans[e, :, 0] = 1.0 - np.sum(w_nodes * s, axis=1)
        trans[e, :, 2:] = np.einsum("im,imj->ij", w_nodes * s, grow)
        mean_f = np.sum(w_nodes * fec_fn(z_nodes, e), axis=1)
        fec[e] = mean_f[:, None] * rp[None, :]
    upper = np.concatenate((grid.split_points[1:], [1.0]))
    lower = grid.split_points
    marg = np.empty(N)
    marg[0] = seedling_prob
    marg[1:] = (1.0 - seedling_prob) * (stats.beta.cdf(upper, a, b) - stats.beta.cdf(lower, a, b))
    return trans, fec, np.broadcast_to(marg / marg.sum(), (n_env, N)).copy()


# ---------------------------------------------------------------------------
# basic design
# ---------------------------------------------------------------------------

def _grid_for(spec: SimSpec, z: np.ndarray) -> SizeGrid:
    if spec.grid == "true":
        return true_grid(spec)
    return build_quantile_grid(z, spec.n_classes, seedling=True)


def _recruit_matrix(rng, totals, probs):
    probs = np.asarray(probs, dtype=float)
    out = np.zeros((totals.size, probs.size), dtype=np.int64)
    has = totals > 0
    if np.any(has):
        out[has] = rng.multinomial(totals[has], probs)
    return out


def gen_basic(spec: SimSpec, rng=None) -> Dataset:
    p = spec.resolved_params()
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    n = spec.n
    a, b = p["size_beta"]
    seed = rng.random(n) < p["seedling_prob"]
    z = np.where(seed, 0.0, rng.beta(a, b, n))
    s0, s1 = p["survival"]
    survived = (rng.random(n) < expit(s0 + s1 * z)).astype(np.int64)
    ga, gb = p["growth_beta"]
    z_next = p["growth_slope"] * z + p["growth_scale"] * rng.beta(ga, gb, n)
    z_next = np.where(survived == 1, z_next, np.nan)
    f0, f1 = p["fecundity"]
    totals = rng.poisson(np.exp(f0 + f1 * z))
    rp = p["recruit_probs"] or default_recruit_probs(spec.n_classes)
    offspring = _recruit_matrix(rng, totals, rp)
    grid = _grid_for(spec, z)
    return Dataset([f"r{k}" for k in range(n)], z, survived, z_next, offspring, grid)


def _basic_truth(spec: SimSpec, grid: SizeGrid) -> DemographicModel:
    p = spec.resolved_params()
    a, b = p["size_beta"]
    s0, s1 = p["survival"]
    ga, gb = p["growth_beta"]
    f0, f1 = p["fecundity"]
    slope, scale = p["growth_slope"], p["growth_scale"]
    rp = p["recruit_probs"] or default_recruit_probs(spec.n_classes)
    trans, fec, marg = _assemble(
        grid,
        lambda z, e: expit(s0 + s1 * z),
        lambda c, z, e: stats.beta.cdf((c - slope * z) / scale, ga, gb),
        lambda z, e: np.exp(f0 + f1 * z),
        rp, p["seedling_prob"], a, b)
    return DemographicModel(trans, fec, marg, meta={"kind": "truth", "design": "basic"})


# ---------------------------------------------------------------------------
# idaho_like design
# ---------------------------------------------------------------------------

def _year_effects(block: dict, labels, name: str) -> np.ndarray:
    yr = block.get("year", 0.0)
    if isinstance(yr, dict):
        return np.array([float(yr.get(lb, 0.0)) for lb in labels])
    if np.isscalar(yr):
        return np.full(len(labels), float(yr))
    yr = np.asarray(yr, dtype=float)
    if yr.size != len(labels):
        raise ConfigError(f"{name}: {yr.size} year effects for {len(labels)} years")
    return yr


def _cov_effect(block: dict, years: dict, labels) -> np.ndarray:
    """Linear covariate contribution per year."""
    cov = years.get("covariates", {})
    coefs = block.get("covariates", {})
    out = np.zeros(len(labels))
    for name, beta in coefs.items():
        if name not in cov:
            raise ConfigError(f"coefficient for unknown covariate {name!r}")
        out += float(beta) * np.asarray(cov[name], dtype=float)
    return out


class _IdahoLaw:
    """Resolved per-year linear predictors of the idaho_like design."""

    def __init__(self, p: dict, n_classes: int):
        yrs = p["years"]
        self.labels = [str(x) for x in yrs["labels"]]
        probs = np.asarray(yrs.get("probs") or [1.0] * len(self.labels), dtype=float)
        self.probs = probs / probs.sum()
        self.cov_names = tuple(yrs.get("covariates", {}).keys())
        self.cov_values = (np.column_stack([np.asarray(yrs["covariates"][c], dtype=float)
                                            for c in self.cov_names])
                           if self.cov_names else np.zeros((len(self.labels), 0)))
        g, ss, sn, f = (p["growth"], p["survival_seedling"], p["survival_nonseedling"],
                        p["fecundity"])
        self.g_shift = (g.get("intercept", 0.0) + _year_effects(g, self.labels, "growth")
                        + _cov_effect(g, yrs, self.labels))
        self.g_slope = float(g.get("z", 1.0))
        self.resid_beta = g.get("resid_beta", [2.0, 2.0])
        self.resid_lo = float(g.get("resid_lo", -0.1))
        self.resid_width = float(g.get("resid_width", 0.2))
        self.ss_eta = (ss.get("intercept", 0.0) + _year_effects(ss, self.labels, "survival_seedling")
                       + _cov_effect(ss, yrs, self.labels))
        self.sn_eta = (sn.get("intercept", 0.0)
                       + _year_effects(sn, self.labels, "survival_nonseedling")
                       + _cov_effect(sn, yrs, self.labels))
        self.sn_slope = float(sn.get("z", 0.0))
        self.f_eta = (f.get("intercept", 0.0) + _year_effects(f, self.labels, "fecundity")
                      + _cov_effect(f, yrs, self.labels))
        self.quadrat_size = int(f.get("quadrat_size", 20))
        self.area_scale = float(f.get("area_scale", 4.0))
        self.recruit_probs = f.get("recruit_probs") or default_recruit_probs(n_classes)
        self.seedling_prob = float(p["seedling_prob"])
        self.size_beta = p["size_beta"]

    def survival(self, z, e):
        z = np.asarray(z, dtype=float)
        return np.where(z == 0.0, expit(self.ss_eta[e]),
                        expit(self.sn_eta[e] + self.sn_slope * z))

    def growth_mean(self, z, e):
        return self.g_shift[e] + self.g_slope * z

    def root_area(self, z):
        return np.exp(0.5 * self.area_scale * np.asarray(z, dtype=float))

    def share(self, c):
        """``E[c / (c + S)]`` with ``S`` the root-area total of the other plants.

        Uses ``1/(c + S) = int_0^inf exp(-(c + S) t) dt`` and the Laplace
        transform of one plant's root area, evaluated by Gauss-Laguerre.
        """
        c = np.asarray(c, dtype=float)
        xs, ws = _beta_expectation_rule(*self.size_beta)
        ra = self.root_area(xs)
        s_nodes, s_w = roots_laguerre(80)
        t = s_nodes[None, :] / c.reshape(-1, 1)                 # (k, L)
        lap = (self.seedling_prob
               + (1.0 - self.seedling_prob) * np.exp(-t[..., None] * ra).dot(ws))
        out = (lap ** (self.quadrat_size - 1)).dot(s_w)          # = c E[1/(c+S)]
        return out.reshape(c.shape)

    def expected_recruits(self, z, e):
        z = np.asarray(z, dtype=float)
        mu = math.exp(self.f_eta[e])
        c = self.root_area(z)
        val = mu * self.share(c)
        return np.where(z == 0.0, 0.0, val)


def gen_idaho_like(spec: SimSpec, rng=None) -> Dataset:
    p = spec.resolved_params()
    law = _IdahoLaw(p, spec.n_classes)
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    m = law.quadrat_size
    n_quad = math.ceil(spec.n / m)
    n_all = n_quad * m
    year = rng.choice(len(law.labels), size=n_quad, p=law.probs)
    e = np.repeat(year, m)
    a, b = law.size_beta
    seed = rng.random(n_all) < law.seedling_prob
    z = np.where(seed, 0.0, rng.beta(a, b, n_all))
    survived = (rng.random(n_all) < law.survival(z, e)).astype(np.int64)
    ra, rb = law.resid_beta
    resid = law.resid_lo + law.resid_width * rng.beta(ra, rb, n_all)
    z_next = np.maximum(law.growth_mean(z, e) + resid, 1e-9)
    z_next = np.where(survived == 1, z_next, np.nan)

    totals = np.zeros(n_all, dtype=np.int64)
    quad_recruits = rng.poisson(np.exp(law.f_eta[year]))
    root_area = law.root_area(z)
    for q in range(n_quad):
        members = np.arange(q * m, (q + 1) * m)
        parents = members[z[members] > 0.0]
        if parents.size == 0 or quad_recruits[q] == 0:
            continue
        w = root_area[parents] / root_area[parents].sum()
        totals[parents] += rng.multinomial(quad_recruits[q], w)
    offspring = _recruit_matrix(rng, totals, law.recruit_probs)

    keep = slice(0, spec.n)
    env = np.array([law.labels[k] for k in e[keep]], dtype=object)
    cov = law.cov_values[e[keep]]
    grid = _grid_for(spec, z[keep])
    return Dataset([f"r{k}" for k in range(spec.n)], z[keep], survived[keep], z_next[keep],
                   offspring[keep], grid, env=env, covariates=cov,
                   covariate_names=law.cov_names)


def _idaho_truth(spec: SimSpec, grid: SizeGrid) -> DemographicModel:
    p = spec.resolved_params()
    law = _IdahoLaw(p, spec.n_classes)
    ra, rb = law.resid_beta
    a, b = law.size_beta

    def cdf(c, z, e):
        x = (np.maximum(c, 0.0) - law.growth_mean(z, e) - law.resid_lo) / law.resid_width
        return stats.beta.cdf(x, ra, rb)

    trans, fec, marg = _assemble(grid, law.survival, cdf, law.expected_recruits,
                                 law.recruit_probs, law.seedling_prob, a, b,
                                 n_env=len(law.labels))
    return DemographicModel(trans, fec, marg, tuple(law.labels), law.probs,
                            meta={"kind": "truth", "design": "idaho_like"})


# ---------------------------------------------------------------------------
# rotifer_like design
# ---------------------------------------------------------------------------

def rotifer_matrices(params: dict | None = None):
    """True survival ``U`` and fertility ``F`` (64 x 64, ``[dest, source]``).

    ``params`` may give per-state ``survival``/``fertility`` rates (4 x 16,
    maternal group by age) or explicit ``U``/``F`` matrices; explicit
    matrices are checked against the block sparsity pattern.
    """
    p = {**ROTIFER_DEFAULTS, **(params or {})}
    if "U" in p:
        U = np.asarray(p["U"], dtype=float)
    else:
        surv = np.asarray(p["survival"], dtype=float).reshape(4, 16)
        U = np.zeros((64, 64))
        for m in range(4):
            for a in range(15):
                U[16 * m + a + 1, 16 * m + a] = surv[m, a]
        if np.any(surv[:, 15] != 0):
            raise ConfigError("age-16 survival must be zero")
    if "F" in p:
        F = np.asarray(p["F"], dtype=float)
    else:
        fert = np.asarray(p["fertility"], dtype=float).reshape(4, 16)
        F = np.zeros((64, 64))
        for m in range(4):
            for a in range(16):
                F[16 * (_rotifer_group(a + 1) - 1), 16 * m + a] = fert[m, a]
    _check_rotifer_pattern(U, F)
    return U, F


def _check_rotifer_pattern(U, F):
    if U.shape != (64, 64) or F.shape != (64, 64):
        raise ConfigError("rotifer matrices must be 64 x 64")
    if np.any(U < 0) or np.any(U > 1) or np.any(F < 0):
        raise ConfigError("rotifer rates out of range")
    allowed_u = np.zeros((64, 64), dtype=bool)
    allowed_f = np.zeros((64, 64), dtype=bool)
    for m in range(4):
        for a in range(15):
            allowed_u[16 * m + a + 1, 16 * m + a] = True
        for a in range(16):
            allowed_f[16 * (_rotifer_group(a + 1) - 1), 16 * m + a] = True
    if np.any(U[~allowed_u] != 0):
        raise ConfigError("survival mass outside the age sub-diagonal")
    if np.any(F[~allowed_f] != 0):
        raise ConfigError("fertility mass outside the block sparsity pattern")


def _rotifer_marginal(p):
    marg = p.get("marginal")
    if marg is None:
        return np.full(64, 1.0 / 64)
    marg = np.asarray(marg, dtype=float)
    if marg.shape != (64,) or np.any(marg < 0):
        raise ConfigError("rotifer marginal must be 64 nonnegative weights")
    return marg / marg.sum()


def gen_rotifer_like(spec: SimSpec, rng=None) -> Dataset:
    p = spec.resolved_params()
    U, F = rotifer_matrices(p)
    marg = _rotifer_marginal(p)
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    n = spec.n
    state = rng.choice(64, size=n, p=marg)
    surv_p = U.sum(axis=0)
    survived = (rng.random(n) < surv_p[state]).astype(np.int64)
    z_next = np.where(survived == 1, state + 2.0, np.nan)
    offspring = rng.poisson(F[:, state].T)
    return Dataset([f"r{k}" for k in range(n)], state + 1.0, survived, z_next, offspring,
                   integer_grid(64))


def _rotifer_truth(spec: SimSpec, grid: SizeGrid | None = None) -> DemographicModel:
    p = spec.resolved_params()
    U, F = rotifer_matrices(p)
    trans = np.zeros((64, 65))
    trans[:, 0] = 1.0 - U.sum(axis=0)
    trans[:, 1:] = U.T
    return DemographicModel(trans, F.T, _rotifer_marginal(p),
                            meta={"kind": "truth", "design": "rotifer_like"})


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

_GENERATORS = {"basic": gen_basic, "idaho_like": gen_idaho_like,
               "rotifer_like": gen_rotifer_like}
_TRUTHS = {"basic": _basic_truth, "idaho_like": _idaho_truth,
           "rotifer_like": _rotifer_truth}


def generate(spec: SimSpec, rng=None) -> Dataset:
    return _GENERATORS[spec.design](spec, rng)


@lru_cache(maxsize=64)
def _truth_cached(spec_json: str, grid_json: str) -> DemographicModel:
    spec = SimSpec.from_dict(json.loads(spec_json))
    grid = SizeGrid.from_dict(json.loads(grid_json))
    return _TRUTHS[spec.design](spec, grid)


def truth_model(spec: SimSpec, grid: SizeGrid | None = None) -> DemographicModel:
    """Population-law model of the design discretised on ``grid``.

    The default grid is the design's population-quantile grid.  Any grid
    with a seedling split at zero works for the size-structured designs.
    """
    if grid is None:
        grid = true_grid(spec)
    if spec.design != "rotifer_like" and not grid.has_seedling_class:
        raise ConfigError("truth construction needs a grid with a seedling class")
    key = SimSpec(spec.design, 1, grid.n_classes if spec.design != "rotifer_like" else 64,
                  0, "true", spec.params).to_json()
    return _truth_cached(key, json.dumps(grid.to_dict(), sort_keys=True))


def truth_value(spec: SimSpec, target: str, grid: SizeGrid | None = None) -> float:
    return evaluate_target(target, truth_model(spec, grid))
