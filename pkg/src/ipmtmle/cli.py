"""Command-line entry point: ``ipmtmle {simulate,analyze,oracle-check,gen-data}``.

Exit codes: 0 ok, 1 usage or configuration error, 2 data error,
3 numeric failure (including oracle tolerance and too many failed
replications).  ``IPMTMLE_OUT`` and ``IPMTMLE_THREADS`` override the
output directory and thread count when the flags are absent.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .demography import write_matrix_csv, write_model_json
from .errors import ConfigError, IpmError
from .influence import oracle_suite
from .tmle import TmleConfig, run_cv_tmle

logger = logging.getLogger("ipmtmle")

ORACLE_TOLERANCES = {"lambda": 1e-4, "elasticity": 1e-3, "log_lambda_s": 1e-4}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("IPMTMLE_OUT") or "."
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {exc}") from None
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory not writable: {path}")
    return path


def _threads(args) -> int | None:
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        return args.threads
    env = os.environ.get("IPMTMLE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"IPMTMLE_THREADS is not an integer: {env!r}") from None
    return None


def cmd_simulate(args) -> int:
    from .experiment import ExperimentConfig, run_experiment

    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    config = ExperimentConfig.from_dict(cfg)
    out = _out_dir(args)
    res = run_experiment(config, out, threads=_threads(args))
    for s in res["summary"]:
        if s.iteration in (0, config.max_iterations):
            print(f"{s.method:>12s} bw={s.bandwidth:<6s} coverage={s.coverage:.3f} "
                  f"bias={s.bias:+.5f} sd={s.sd:.5f} rmse={s.rmse:.5f} n={s.n}")
    if res["failures"]:
        print(f"{len(res['failures'])} failed runs (see failures.csv)", file=sys.stderr)
    if res["failure_rate"] > config.max_failure_rate:
        print(f"failure rate {res['failure_rate']:.1%} exceeds "
              f"{config.max_failure_rate:.0%}", file=sys.stderr)
        return 3
    return 0


def _tmle_config(cfg: dict, seed) -> TmleConfig:
    keys = {k: v for k, v in cfg.items() if k in TmleConfig.__dataclass_fields__}
    if seed is not None:
        keys["seed"] = seed
    try:
        return TmleConfig(**keys)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _format_report(rep: dict) -> str:
    lines = [
        f"target            {rep['target']}",
        f"initial estimate  {rep['initial']:.6g} (se {rep['initial_std_error']:.3g})",
        f"TMLE estimate     {rep['estimate']:.6g} (se {rep['std_error']:.3g})",
        f"95% CI            [{rep['ci_low']:.6g}, {rep['ci_high']:.6g}]",
        f"iterations        {rep['n_iterations']} (converged: {rep['converged']})",
        "epsilon trace     " + ", ".join(f"({a:.3g}, {b:.3g})" for a, b in rep["epsilon_trace"]),
    ]
    if rep["warnings"]:
        lines.append("warnings:")
        lines += [f"  - {w}" for w in rep["warnings"]]
    return "\n".join(lines) + "\n"


def cmd_analyze(args) -> int:
    from .data import read_dataset

    cfg = _load_config(args.config)
    config = _tmle_config(cfg, args.seed)
    data = read_dataset(args.input, cfg.get("schema"))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est, _ = run_cv_tmle(data, config)
    rep = est.to_report()
    seen = list(rep["warnings"])
    for w in caught:
        msg = f"{w.category.__name__}: {w.message}"
        if msg not in seen:
            seen.append(msg)
    rep["warnings"] = seen
    out = _out_dir(args)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(rep, fh, indent=1)
    text = _format_report(rep)
    (out / "report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_oracle_check(args) -> int:
    cfg = _load_config(args.config)
    targets = cfg.get("targets", list(ORACLE_TOLERANCES))
    unknown = [t for t in targets if t not in ORACLE_TOLERANCES]
    if unknown:
        raise ConfigError(f"unknown targets {unknown}")
    n_inst = int(cfg.get("n_instances", 100))
    sizes = tuple(cfg.get("sizes", (2, 3, 4)))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    tol = {**ORACLE_TOLERANCES, **cfg.get("tolerances", {})}
    ok = True
    rows = []
    for t in targets:
        res = oracle_suite([t], sizes, n_inst, seed, float(cfg.get("h", 1e-5)))
        worst = max(r.rel_error for r in res)
        mean0 = max(r.mean_abs for r in res)
        passed = worst < tol[t]
        ok &= passed
        rows.append((t, len(res), worst, mean0, tol[t], passed))
    lines = ["target,instances,max_rel_error,max_abs_mean,tolerance,pass"]
    lines += [f"{t},{n},{w!r},{m!r},{tl!r},{int(p)}" for t, n, w, m, tl, p in rows]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out or os.environ.get("IPMTMLE_OUT"):
        (_out_dir(args) / "oracle_check.csv").write_text(text, encoding="utf-8")
    return 0 if ok else 3


def cmd_gen_data(args) -> int:
    from .data import write_dataset
    from .simgen import SimSpec, generate, truth_model

    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    try:
        spec = SimSpec.from_dict(cfg)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    out = _out_dir(args)
    data = generate(spec, np.random.default_rng(spec.seed))
    write_dataset(data, out / "data.csv")
    truth = truth_model(spec, data.grid)
    write_model_json(truth, out / "truth_model.json")
    for e in range(truth.n_env):
        sfx = "" if truth.n_env == 1 else f"_env{truth.env_levels[e]}"
        write_matrix_csv(truth.growth_survival(e), out / f"truth_GM{sfx}.csv")
        write_matrix_csv(truth.fecundity_matrix(e), out / f"truth_F{sfx}.csv")
    (out / "spec.json").write_text(spec.to_json() + "\n", encoding="utf-8")
    print(f"wrote {data.n} records to {out / 'data.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ipmtmle", description="CV-TMLE for discretized integral projection models")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--out", metavar="DIR")
        return sp

    common(sub.add_parser("simulate", help="Monte Carlo experiment")).set_defaults(fn=cmd_simulate)
    sp = common(sub.add_parser("analyze", help="CV-TMLE on one CSV dataset"))
    sp.add_argument("input", metavar="CSV")
    sp.set_defaults(fn=cmd_analyze)
    common(sub.add_parser("oracle-check", help="influence functions vs numeric oracle")
           ).set_defaults(fn=cmd_oracle_check)
    common(sub.add_parser("gen-data", help="write one synthetic dataset and its truth")
           ).set_defaults(fn=cmd_gen_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except IpmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
