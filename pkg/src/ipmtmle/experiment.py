"""Monte Carlo harness: replicate a design, run CV-TMLE, summarise.

Each replication owns the random stream ``SeedSequence([seed, rep])``, so
results do not depend on how replications are scheduled.  Outputs are
tidy CSV files written by the parent process in a fixed order.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .demography import FitConfig, evaluate_target, write_matrix_csv
from .errors import ConfigError, IpmError
from .influence import eif_grid
from .simgen import SimSpec, generate, truth_model
from .tmle import TmleConfig, run_cv_tmle

logger = logging.getLogger(__name__)

REP_COLUMNS = ("rep", "bandwidth", "iteration", "truth", "estimate", "se", "ci_low",
               "ci_high", "covered", "eps_growth", "eps_fecundity", "status")
SUMMARY_COLUMNS = ("method", "bandwidth", "iteration", "n", "coverage", "mean", "bias",
                   "sd", "rmse")


@dataclass
class ExperimentConfig:
    """One Monte Carlo experiment (JSON keys mirror the field names)."""

    design: str = "basic"
    n: int = 1000
    n_classes: int = 100
    grid: str = "sample"
    params: dict = field(default_factory=dict)
    target: str = "lambda"
    bandwidths: list = field(default_factory=lambda: [0.01, 0.1])
    n_replications: int = 200
    n_folds: int = 5
    max_iterations: int = 5
    epsilon_tol: float = 1e-4
    initial: str = "parametric"
    cross_fit: bool | str = "auto"
    env_weight_term: bool = False
    seed: int = 0
    histogram_bins: int = 30
    heatmaps: bool = True
    max_failure_rate: float = 0.1

    def __post_init__(self):
        if self.n_replications < 1:
            raise ConfigError("n_replications must be at least 1")
        if self.initial == "empirical":
            self.bandwidths = [None]
        if not self.bandwidths:
            raise ConfigError("at least one bandwidth is required")
        for bw in self.bandwidths:
            if bw is not None and bw != "cv" and not float(bw) > 0:
                raise ConfigError(f"invalid bandwidth {bw!r}")
        SimSpec(self.design, self.n, self.n_classes, self.seed, self.grid, self.params)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def sim_spec(self, rep_seed: int = 0) -> SimSpec:
        return SimSpec(self.design, self.n, self.n_classes, rep_seed, self.grid, self.params)

    def tmle_config(self, bandwidth, fold_seed: int) -> TmleConfig:
        fit = FitConfig(bandwidth=0.05 if bandwidth is None else bandwidth)
        return TmleConfig(target=self.target, n_folds=self.n_folds,
                          max_iterations=self.max_iterations, epsilon_tol=self.epsilon_tol,
                          seed=fold_seed, initial=self.initial, cross_fit=self.cross_fit,
                          fit=fit, env_weight_term=self.env_weight_term)


@dataclass
class SummaryRow:
    method: str
    bandwidth: object
    iteration: int
    n: int
    coverage: float
    mean: float
    bias: float
    sd: float
    rmse: float


def _bw_label(bw) -> str:
    return "NA" if bw is None else str(bw)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def replication_streams(seed: int, rep: int):
    """(data rng, fold seed) for replication ``rep``."""
    ss = np.random.SeedSequence([int(seed), int(rep)])
    data_ss, fold_ss = ss.spawn(2)
    return np.random.default_rng(data_ss), int(fold_ss.generate_state(1)[0])


def run_replication(config: ExperimentConfig, rep: int, keep_models: bool = False) -> dict:
    """All bandwidths of one replication; never raises for numeric failures."""
    rng, fold_seed = replication_streams(config.seed, rep)
    out = {"rep": rep, "rows": [], "failures": [], "models": {}}
    try:
        spec = config.sim_spec(rep)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            data = generate(spec, rng)
            truth = truth_model(spec, data.grid)
            truth_val = evaluate_target(config.target, truth)
    except (IpmError, FloatingPointError, np.linalg.LinAlgError) as exc:
        for bw in config.bandwidths:
            out["failures"].append((rep, _bw_label(bw), f"data: {exc}"))
        return out
    if keep_models:
        out["models"]["truth"] = truth
    for bw in config.bandwidths:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res, state = run_cv_tmle(data, config.tmle_config(bw, fold_seed))
        except (IpmError, FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
            out["failures"].append((rep, _bw_label(bw), str(exc)))
            continue
        for k in range(config.max_iterations + 1):
            lo, hi = res.ci(k)
            eps = res.epsilon_trace[k - 1] if 1 <= k <= len(res.epsilon_trace) else (0.0, 0.0)
            out["rows"].append({
                "rep": rep, "bandwidth": _bw_label(bw), "iteration": k, "truth": truth_val,
                "estimate": res.estimate_trace[k], "se": res.std_error_trace[k],
                "ci_low": lo, "ci_high": hi, "covered": int(lo <= truth_val <= hi),
                "eps_growth": float(eps[0]), "eps_fecundity": float(eps[1]),
                "status": "converged" if res.converged else "max_iterations",
            })
        if keep_models:
            out["models"][_bw_label(bw)] = (state.initial_models[0], state.models[0])
    return out


def summarize(rows) -> list[SummaryRow]:
    """Per (bandwidth, iteration) summary; ``sd`` is the population sd of errors.

    With a fixed truth the error sd equals the sd of the estimates; using
    errors keeps ``rmse^2 = bias^2 + sd^2`` exact when the truth varies
    with the data-driven grid.
    """
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["bandwidth"], int(r["iteration"])), []).append(r)
    out = []
    for (bw, k), rs in sorted(groups.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
        est = np.array([float(r["estimate"]) for r in rs])
        err = est - np.array([float(r["truth"]) for r in rs])
        cov = np.array([int(r["covered"]) for r in rs])
        bias = float(np.mean(err))
        sd = float(np.sqrt(np.mean((err - bias) ** 2)))
        rmse = float(np.sqrt(bias ** 2 + sd ** 2))
        out.append(SummaryRow("initial" if k == 0 else f"tmle-iter-{k}", bw, k, len(rs),
                              float(np.mean(cov)), float(np.mean(est)), bias, sd, rmse))
    return out


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_replications(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _histogram_rows(rows, n_bins, final_iter):
    out = []
    by_bw: dict = {}
    for r in rows:
        by_bw.setdefault(r["bandwidth"], []).append(r)
    for bw in sorted(by_bw, key=str):
        rs = by_bw[bw]
        vals = {m: np.array([r["estimate"] for r in rs if r["iteration"] == k])
                for m, k in (("initial", 0), ("tmle", final_iter))}
        allv = np.concatenate(list(vals.values()))
        lo, hi = float(allv.min()), float(allv.max())
        if hi <= lo:
            hi = lo + 1e-12
        edges = np.linspace(lo, hi, n_bins + 1)
        for m, v in vals.items():
            counts, _ = np.histogram(v, edges)
            for b in range(n_bins):
                out.append({"bandwidth": bw, "method": m, "bin_low": float(edges[b]),
                            "bin_high": float(edges[b + 1]), "count": int(counts[b])})
    return out


def _write_heatmaps(out_dir: Path, config: ExperimentConfig, models: dict):
    truth = models.get("truth")
    if truth is None:
        return
    write_matrix_csv(truth.growth_survival(0), out_dir / "heatmap_GM_truth.csv")
    write_matrix_csv(eif_grid(config.target, truth), out_dir / "heatmap_EIF_truth.csv")
    for bw in config.bandwidths:
        pair = models.get(_bw_label(bw))
        if pair is None:
            continue
        for tag, m in zip(("initial", "tmle"), pair):
            stem = f"bw{_bw_label(bw)}_{tag}"
            write_matrix_csv(m.growth_survival(0), out_dir / f"heatmap_GM_{stem}.csv")
            write_matrix_csv(eif_grid(config.target, m), out_dir / f"heatmap_EIF_{stem}.csv")


def _worker(args):
    config, rep = args
    return run_replication(config, rep, keep_models=(rep == 0 and config.heatmaps))


def run_experiment(config: ExperimentConfig, out_dir, threads: int | None = None) -> dict:
    """Run all replications and write the CSV outputs into ``out_dir``.

    Returns a dict with the summary rows and the failure list.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    threads = threads or int(os.environ.get("IPMTMLE_THREADS", 0)) or os.cpu_count() or 1
    jobs = [(config, rep) for rep in range(config.n_replications)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_worker, jobs))
    else:
        results = [_worker(j) for j in jobs]
    results.sort(key=lambda r: r["rep"])

    rows = [row for r in results for row in r["rows"]]
    failures = [f for r in results for f in r["failures"]]
    _write_csv(out_dir / "replications.csv", REP_COLUMNS, rows)
    summary = summarize(rows)
    _write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, [asdict(s) for s in summary])
    if rows:
        _write_csv(out_dir / "histogram.csv",
                   ("bandwidth", "method", "bin_low", "bin_high", "count"),
                   _histogram_rows(rows, config.histogram_bins, config.max_iterations))
    _write_csv(out_dir / "failures.csv", ("rep", "bandwidth", "reason"),
               [{"rep": f[0], "bandwidth": f[1], "reason": f[2]} for f in failures])
    if config.heatmaps and results and results[0]["models"]:
        _write_heatmaps(out_dir, config, results[0]["models"])
    with open(out_dir / "config.json", "w", encoding="utf-8") as fh:
        json.dump(asdict(config), fh, indent=1, sort_keys=True)
    n_runs = config.n_replications * len(config.bandwidths)
    return {"summary": summary, "failures": failures,
            "failure_rate": len(failures) / n_runs if n_runs else 0.0}
