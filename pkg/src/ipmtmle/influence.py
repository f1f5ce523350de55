"""Efficient influence functions of the kernel targets and a Gateaux oracle.

Every target here is a smooth function of the kernels ``K_theta``.  Its
first-order change can be written as

    dPsi = sum_theta w_theta <A_theta, d(GM)_theta> + <B_theta, dF_theta>

for coefficient matrices ``A`` (growth-survival block) and ``B``
(fecundity block), both indexed ``[j, i]`` = (destination, source).  The
influence value of a record then follows from the score of the
conditional law it informs:

    psi_growth    = (A[z*, z] 1{z* >= 1} - sum_j A[j, z] P(j | z)) / p_z
    psi_fecundity = sum_j B[j, z] (Y_j - Q_j(z)) / p_z

with ``p_z`` the class marginal within the record's environment.
The per-record functions ``eif_*`` spell the same quantities out through
the ``W`` matrices of the closed-form theorems and serve as a cross-check
of the batch path used by TMLE.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import Dataset, IndividualRecord
from .demography import (DemographicModel, EigenSystem, deflated_pinv, dominant_eigs,
                         evaluate_target, kernel_matrix, log_lambda_s_terms, mean_kernel,
                         write_matrix_csv)
from .errors import EstimationError

TARGET_IDS = ("lambda", "elasticity", "log_lambda_s")


@dataclass
class InfluenceEvaluation:
    psi_growth: float
    psi_fecundity: float
    psi_env: float = 0.0
    floored: bool = False

    @property
    def psi_total(self) -> float:
        return self.psi_growth + self.psi_fecundity + self.psi_env


@dataclass
class Coefficients:
    """Gradient matrices of a target; arrays have shape ``(E, N, N)``."""

    target: str
    A: np.ndarray
    B: np.ndarray
    value: float
    # influence of the environment weights (only log lambda_S, optional)
    env_term: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Gradient matrices
# ---------------------------------------------------------------------------

def _dominant(model, eig):
    K = mean_kernel(model)
    if eig is None:
        eig = dominant_eigs(K, check_primitive=False)
    return K, eig


def _T(a, b, g):
    return np.outer(a, b) - (a @ b) * g


def coefficient_matrices(target: str, model: DemographicModel,
                         eig: EigenSystem | None = None,
                         env_weight_term: bool = False) -> Coefficients:
    """Gradient matrices ``A`` and ``B`` of ``target`` at ``model``."""
    K, eig = _dominant(model, eig)
    lam, u, v = eig.lam, eig.u, eig.v
    s = float(v @ u)
    E = model.n_env
    g = np.outer(v, u) / s
    if target == "lambda":
        D = np.broadcast_to(g, (E,) + g.shape).copy()
        return Coefficients(target, D, D.copy(), lam)
    if lam <= 1e-12:
        raise EstimationError("degenerate eigenvalue")
    P = deflated_pinv(lam, K)
    u1, v1 = P @ u, v @ P
    if target == "elasticity":
        F = np.tensordot(model.env_weights, model.fecundity.transpose(0, 2, 1), axes=1)
        c = float(v @ F @ u) / s
        u2, v2 = P @ (F @ u), (v @ F) @ P
        DK = (lam * (_T(v, u2, g) + _T(v2, u, g))
              - c * (np.outer(v, u) + lam * (_T(v, u1, g) + _T(v1, u, g)))) / (lam ** 2 * s)
        DF = np.outer(v, u) / (lam * s)
        A = np.broadcast_to(DK, (E,) + DK.shape).copy()
        B = np.broadcast_to(DK + DF, (E,) + DK.shape).copy()
        return Coefficients(target, A, B, c / lam)
    if target == "log_lambda_s":
        Ks = [kernel_matrix(model, e) for e in range(E)]
        cK = np.array([v @ Kt @ u for Kt in Ks])
        if np.any(cK <= 0):
            raise EstimationError("v' K_theta u <= 0 for some environment")
        base = _T(v, u1, g) + _T(v1, u, g)
        G_bar = np.zeros_like(K)
        for e in range(E):
            u2 = P @ (Ks[e] @ u)
            v2 = (v @ Ks[e]) @ P
            G_bar += model.env_weights[e] * ((_T(v, u2, g) + _T(v2, u, g)) / cK[e] - base / s)
        A = np.stack([np.outer(v, u) / cK[e] + G_bar for e in range(E)])
        logc = np.log(cK / s)
        value = float(model.env_weights @ logc)
        env_term = None
        if env_weight_term:
            env_term = np.array([logc[e] - value + np.sum(G_bar * (Ks[e] - K))
                                 for e in range(E)])
        return Coefficients(target, A, A.copy(), value, env_term)
    raise ValueError(f"unknown target {target!r}")


def growth_phi(model: DemographicModel, coefs: Coefficients) -> np.ndarray:
    """Growth-space clever covariate ``phi[e, i, j]`` over ``j in 0..N``.

    ``phi = A[j, i] / p_i`` for ``j >= 1`` and ``0`` for death; adding any
    row constant gives the same tilt, so the conditional centring is left
    out.
    """
    E, N = model.n_env, model.n_classes
    phi = np.zeros((E, N, N + 1))
    phi[:, :, 1:] = coefs.A.transpose(0, 2, 1) / model.marginal[:, :, None]
    return phi


def fecundity_h(model: DemographicModel, coefs: Coefficients) -> np.ndarray:
    """Fecundity clever covariate ``H[e, i, j] = B[j, i] / p_i``."""
    return coefs.B.transpose(0, 2, 1) / model.marginal[:, :, None]


# ---------------------------------------------------------------------------
# Batch evaluation over records
# ---------------------------------------------------------------------------

def env_indices(model: DemographicModel, dataset: Dataset) -> np.ndarray:
    if not model.has_env:
        return np.zeros(dataset.n, dtype=np.int64)
    if dataset.env is None:
        from .errors import DataError
        raise DataError("environment column required")
    lookup = {lv: k for k, lv in enumerate(model.env_levels)}
    try:
        return np.array([lookup[x] for x in dataset.env], dtype=np.int64)
    except KeyError as exc:
        from .errors import DataError
        raise DataError(f"environment level {exc.args[0]!r} not in the model") from None


def eif_batch(coefs: Coefficients, model: DemographicModel, dataset: Dataset,
              env_idx: np.ndarray | None = None):
    """Influence values of every record: ``(psi_growth, psi_fecundity, psi_env)``."""
    e = env_indices(model, dataset) if env_idx is None else env_idx
    i = dataset.z_class - 1
    js = dataset.z_next_class
    p = model.marginal[e, i]
    A_cols = coefs.A[e, :, i]                      # (n, N): A[e, :, i]
    centre = np.einsum("rj,rj->r", A_cols, model.trans[e, i, 1:])
    hit = np.where(js >= 1, A_cols[np.arange(dataset.n), np.maximum(js, 1) - 1], 0.0)
    psi_g = (hit - centre) / p
    B_cols = coefs.B[e, :, i]
    resid = dataset.offspring - model.fecundity[e, i, :]
    psi_f = np.einsum("rj,rj->r", B_cols, resid) / p
    psi_e = np.zeros(dataset.n) if coefs.env_term is None else coefs.env_term[e]
    return psi_g, psi_f, psi_e


# ---------------------------------------------------------------------------
# Per-record closed forms
# ---------------------------------------------------------------------------

def _observation(record, n_classes):
    if isinstance(record, IndividualRecord):
        y = np.zeros(n_classes)
        for j, cnt in record.offspring.items():
            y[int(j) - 1] = cnt
        return record.z_class, record.z_next_class, y, record.env_label
    z, zs, y = record[:3]
    env = record[3] if len(record) > 3 else None
    return int(z), int(zs), np.asarray(y, dtype=float), env


def score_matrices(record, model: DemographicModel, env: int = 0):
    """``W1`` (growth) and ``W2`` (fecundity) as ``N x N`` arrays ``[j, i]``.

    ``W1[j, i] = (1{Z=i, Z*=j} - 1{Z=i} P(j | i)) / p_i`` and
    ``W2[j, i] = 1{Z=i} (Y_j - Q_j(i)) / p_i``.
    """
    N = model.n_classes
    z, zs, y, _ = _observation(record, N)
    i = z - 1
    p = model.marginal[env, i]
    W1 = np.zeros((N, N))
    W2 = np.zeros((N, N))
    W1[:, i] = -model.trans[env, i, 1:]
    if zs >= 1:
        W1[zs - 1, i] += 1.0
    W1[:, i] /= p
    W2[:, i] = (y - model.fecundity[env, i]) / p
    return W1, W2, bool(model.floored[env, i])


def _record_env(record, model):
    if not model.has_env:
        return 0
    env = _observation(record, model.n_classes)[3]
    return model.env_index(env)


def eif_lambda(record, model: DemographicModel,
               eig: EigenSystem | None = None) -> InfluenceEvaluation:
    """``v' W1 u / <v,u>`` and ``v' W2 u / <v,u>``."""
    _, eig = _dominant(model, eig)
    e = _record_env(record, model)
    W1, W2, fl = score_matrices(record, model, e)
    s = eig.v @ eig.u
    return InfluenceEvaluation(float(eig.v @ W1 @ eig.u / s),
                               float(eig.v @ W2 @ eig.u / s), floored=fl)


def eif_elasticity(record, model: DemographicModel,
                   eig: EigenSystem | None = None) -> InfluenceEvaluation:
    """Elasticity influence via the auxiliary vectors ``u1, u2, v1, v2``.

    With ``Wt = W - (v'Wu/<v,u>) I`` and ``c = v'Fu/<v,u>``, the growth
    piece is::

        [lam (v'Wt u2 + v2'Wt u) - c (v'W u + lam (v'Wt u1 + v1'Wt u))]
        / (lam^2 <v,u>)

    and the fecundity piece adds ``v'W2 u / (lam <v,u>)`` to the same
    expression evaluated at ``W2``.
    """
    K, eig = _dominant(model, eig)
    lam, u, v = eig.lam, eig.u, eig.v
    if lam <= 1e-12:
        raise EstimationError("degenerate eigenvalue")
    s = float(v @ u)
    P = deflated_pinv(lam, K)
    F = np.tensordot(model.env_weights, model.fecundity.transpose(0, 2, 1), axes=1)
    c = float(v @ F @ u) / s
    u1, v1 = P @ u, v @ P
    u2, v2 = P @ (F @ u), (v @ F) @ P
    e = _record_env(record, model)
    W1, W2, fl = score_matrices(record, model, e)

    def piece(W):
        Wt = W - (v @ W @ u / s) * np.eye(len(u))
        return (lam * (v @ Wt @ u2 + v2 @ Wt @ u)
                - c * (v @ W @ u + lam * (v @ Wt @ u1 + v1 @ Wt @ u))) / (lam ** 2 * s)

    return InfluenceEvaluation(float(piece(W1)),
                               float(piece(W2) + v @ W2 @ u / (lam * s)), floored=fl)


def eif_log_lambda_s(record, model: DemographicModel, eig: EigenSystem | None = None,
                     env_weight_term: bool = False) -> InfluenceEvaluation:
    """Small-fluctuation log growth rate with fixed environment weights.

    The record's own environment contributes ``v' W u / c_theta`` (with
    ``c_theta = v' K_theta u``); all environments contribute through the
    eigenvectors of the mean kernel, weighted by ``w_theta``.
    """
    K, eig = _dominant(model, eig)
    lam, u, v = eig.lam, eig.u, eig.v
    s = float(v @ u)
    P = deflated_pinv(lam, K)
    u1, v1 = P @ u, v @ P
    e = _record_env(record, model)
    W1, W2, fl = score_matrices(record, model, e)
    N = len(u)
    Ks = [kernel_matrix(model, k) for k in range(model.n_env)]
    cK = np.array([v @ Kt @ u for Kt in Ks])
    if np.any(cK <= 0):
        raise EstimationError("v' K_theta u <= 0 for some environment")

    def piece(W):
        Wt = W - (v @ W @ u / s) * np.eye(N)
        out = v @ W @ u / cK[e]
        for k, Kt in enumerate(Ks):
            u2, v2 = P @ (Kt @ u), (v @ Kt) @ P
            out += model.env_weights[k] * ((v @ Wt @ u2 + v2 @ Wt @ u) / cK[k]
                                           - (v @ Wt @ u1 + v1 @ Wt @ u) / s)
        return out

    psi_env = 0.0
    if env_weight_term:
        coefs = coefficient_matrices("log_lambda_s", model, eig, env_weight_term=True)
        psi_env = float(coefs.env_term[e])
    return InfluenceEvaluation(float(piece(W1)), float(piece(W2)), psi_env, fl)


EIF_FUNCTIONS = {
    "lambda": eif_lambda,
    "elasticity": eif_elasticity,
    "log_lambda_s": eif_log_lambda_s,
}


def eif_record(target: str, record, model: DemographicModel,
               eig: EigenSystem | None = None, **kwargs) -> InfluenceEvaluation:
    return EIF_FUNCTIONS[target](record, model, eig, **kwargs)


def eif_grid(target: str, model: DemographicModel, eig: EigenSystem | None = None,
             env: int = 0) -> np.ndarray:
    """Per-cell growth contributions ``A[j, i] / p_i`` (heatmap data)."""
    coefs = coefficient_matrices(target, model, eig)
    return coefs.A[env] / model.marginal[env][None, :]


def write_eif_grid(target: str, model: DemographicModel, path,
                   eig: EigenSystem | None = None, env: int = 0) -> None:
    write_matrix_csv(eif_grid(target, model, eig, env), path)


# ---------------------------------------------------------------------------
# Discrete laws and the Gateaux oracle
# ---------------------------------------------------------------------------

@dataclass
class DiscreteLaw:
    """Finite joint law of observations ``(z, z*, y[, env])``.

    ``z`` in ``1..N``, ``z*`` in ``0..N``, ``y`` a length-``N`` vector and
    ``env`` an index into ``env_levels``.
    """

    n_classes: int
    points: list
    probs: np.ndarray
    env_levels: tuple = (None,)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        self.points = [self._key(pt) for pt in self.points]
        if len(self.points) != self.probs.size:
            raise ValueError("points and probs differ in length")
        if abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to one")

    @staticmethod
    def _key(pt):
        z, zs, y = pt[:3]
        env = pt[3] if len(pt) > 3 else 0
        return (int(z), int(zs), tuple(float(x) for x in y), int(env))

    def contaminate(self, point, h: float) -> "DiscreteLaw":
        """``(1 - h) P + h delta_point`` (``h`` may be negative)."""
        key = self._key(point)
        pts = list(self.points)
        probs = (1.0 - h) * self.probs
        if key in pts:
            k = pts.index(key)
            probs = probs.copy()
            probs[k] += h
        else:
            pts.append(key)
            probs = np.append(probs, h)
        law = DiscreteLaw.__new__(DiscreteLaw)
        law.n_classes, law.points, law.probs, law.env_levels = (
            self.n_classes, pts, probs, self.env_levels)
        return law

    @property
    def valid(self) -> bool:
        return bool(np.all(self.probs >= -1e-15))

    def to_model(self) -> DemographicModel:
        """Rebuild ``trans``, ``Q``, ``p(z | env)`` and env weights from the joint."""
        N = self.n_classes
        E = len(self.env_levels)
        mass = np.zeros((E, N))
        trans = np.zeros((E, N, N + 1))
        fec = np.zeros((E, N, N))
        for (z, zs, y, env), pr in zip(self.points, self.probs):
            mass[env, z - 1] += pr
            trans[env, z - 1, zs] += pr
            fec[env, z - 1] += pr * np.asarray(y)
        w = mass.sum(axis=1)
        ok = mass > 0
        trans[ok] /= mass[ok][:, None]
        fec[ok] /= mass[ok][:, None]
        trans[~ok, 0] = 1.0
        marg = mass / w[:, None]
        return DemographicModel(trans, fec, marg, self.env_levels, w / w.sum(),
                                supported=ok)

    def expectation(self, values) -> float:
        return float(np.dot(self.probs, values))


def dense_eigs(K) -> EigenSystem:
    """Dominant eigen-triple from a full eigendecomposition (oracle use)."""
    K = np.asarray(K, dtype=float)
    w, V = np.linalg.eig(K)
    k = int(np.argmax(w.real))
    u = np.abs(V[:, k].real)
    wl, Vl = np.linalg.eig(K.T)
    kl = int(np.argmax(wl.real))
    v = np.abs(Vl[:, kl].real)
    u = u / u.sum()
    v = v / (v @ u)
    lam = float(v @ K @ u)
    return EigenSystem(lam, u, v, float(np.max(np.abs(K @ u - lam * u))),
                       float(np.max(np.abs(v @ K - lam * v))))


def law_functional(functional) -> Callable[[DiscreteLaw], float]:
    if callable(functional):
        return functional
    if functional == "mean_z":
        return lambda law: law.expectation([pt[0] for pt in law.points])
    if functional in TARGET_IDS:
        def f(law):
            model = law.to_model()
            return evaluate_target(functional, model, dense_eigs(mean_kernel(model)))
        return f
    raise ValueError(f"unknown functional {functional!r}")


@dataclass
class OracleResult:
    value: float
    central: bool


def gateaux_oracle(functional, law: DiscreteLaw, observation, h: float = 1e-5) -> OracleResult:
    """Finite-difference derivative of a functional toward a point mass.

    Central difference ``[Psi((1-h)P + h d) - Psi((1+h)P - h d)] / (2h)``;
    when the minus branch is not a probability law the forward difference
    ``[Psi((1-h)P + h d) - Psi(P)] / h`` is returned with ``central=False``.
    """
    if not 1e-8 <= h <= 1e-3:
        raise ValueError("h must lie in [1e-8, 1e-3]")
    fn = law_functional(functional)
    plus = law.contaminate(observation, h)
    minus = law.contaminate(observation, -h)
    if minus.valid:
        try:
            return OracleResult((fn(plus) - fn(minus)) / (2.0 * h), True)
        except (EstimationError, FloatingPointError, ValueError):
            pass
    return OracleResult((fn(plus) - fn(law)) / h, False)


# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------

def random_law(n_classes: int, rng, n_env: int = 1, y_scale: float = 1.0,
               n_y: int = 2) -> DiscreteLaw:
    """Full-support random law: Dirichlet rows, ``n_y`` recruit vectors per cell."""
    N = n_classes
    points, probs = [], []
    env_w = rng.dirichlet(np.full(n_env, 5.0))
    for e in range(n_env):
        marg = rng.dirichlet(np.full(N, 3.0))
        for i in range(N):
            row = rng.dirichlet(np.full(N + 1, 2.0))
            ys = [rng.uniform(0.0, y_scale, N) for _ in range(n_y)]
            for js in range(N + 1):
                for y in ys:
                    points.append((i + 1, js, y, e))
                    probs.append(env_w[e] * marg[i] * row[js] / n_y)
    probs = np.array(probs)
    levels = (None,) if n_env == 1 else tuple(f"env{k}" for k in range(n_env))
    return DiscreteLaw(N, points, probs / probs.sum(), levels)


def _support_observations(law):
    return [(z, zs, np.array(y), law.env_levels[e]) for z, zs, y, e in law.points]


@dataclass
class OracleComparison:
    target: str
    n_classes: int
    rel_error: float
    mean_abs: float
    n_support: int


def compare_with_oracle(target: str, law: DiscreteLaw, h: float = 1e-5) -> OracleComparison:
    """Closed-form influence vs oracle over every support point of ``law``.

    ``rel_error = max |psi - oracle| / max |psi|`` over the support, and
    ``mean_abs = |sum psi P|`` (should vanish).  The oracle perturbs the
    environment frequencies too, so for ``log_lambda_s`` the comparison
    includes the weight term of the influence function.
    """
    model = law.to_model()
    eig = dense_eigs(mean_kernel(model))
    kw = {"env_weight_term": True} if target == "log_lambda_s" else {}
    closed, oracle = [], []
    for obs in _support_observations(law):
        closed.append(eif_record(target, obs, model, eig, **kw).psi_total)
        oracle.append(gateaux_oracle(target, law, (*obs[:3], law.env_levels.index(obs[3])), h)
                      .value)
    closed, oracle = np.array(closed), np.array(oracle)
    scale = max(np.max(np.abs(closed)), 1e-300)
    return OracleComparison(target, law.n_classes,
                            float(np.max(np.abs(closed - oracle)) / scale),
                            abs(law.expectation(closed)), len(closed))


def oracle_suite(targets: Sequence[str] = TARGET_IDS, sizes: Sequence[int] = (2, 3, 4),
                 n_instances: int = 100, seed: int = 0, h: float = 1e-5) -> list:
    """Run the oracle comparison on ``n_instances`` random laws per target."""
    rng = np.random.default_rng(seed)
    out = []
    for target, k in itertools.product(targets, range(n_instances)):
        N = sizes[k % len(sizes)]
        law = random_law(N, rng, n_env=2 if target == "log_lambda_s" else 1)
        out.append(compare_with_oracle(target, law, h))
    return out
