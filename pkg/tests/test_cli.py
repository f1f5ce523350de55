import csv
import json
import math

import numpy as np
import pytest

from ipmtmle.cli import main
from ipmtmle.data import write_dataset
from ipmtmle.experiment import ExperimentConfig, read_replications, summarize
from ipmtmle.simgen import SimSpec, generate

SMALL = {"n": 300, "n_classes": 20, "n_replications": 3, "bandwidths": [0.1],
         "max_iterations": 2, "seed": 3}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_simulate_outputs_and_summary(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", write_cfg(tmp_path, SMALL), "--out", str(out),
                 "--threads", "1"]) == 0
    rows = read_replications(out / "replications.csv")
    assert {r["iteration"] for r in rows} == {"0", "1", "2"}
    for r in rows:
        lo, hi, t = float(r["ci_low"]), float(r["ci_high"]), float(r["truth"])
        assert int(r["covered"]) == int(lo <= t <= hi)
    # an independent reader reproduces the summary exactly
    with open(out / "summary.csv") as fh:
        summ = list(csv.DictReader(fh))
    again = summarize(rows)
    for s, a in zip(summ, again):
        for key in ("coverage", "mean", "bias", "sd", "rmse"):
            assert float(s[key]) == getattr(a, key)
        assert abs(a.rmse ** 2 - a.bias ** 2 - a.sd ** 2) < 1e-9
    for name in ("histogram.csv", "heatmap_GM_truth.csv", "heatmap_EIF_bw0.1_tmle.csv",
                 "heatmap_GM_bw0.1_initial.csv"):
        assert (out / name).exists()


def test_simulate_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    files = {}
    for k in ("a", "b"):
        out = tmp_path / k
        assert main(["simulate", "--config", cfg, "--out", str(out), "--threads", "1"]) == 0
        files[k] = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    assert files["a"] == files["b"]


def test_simulate_trivial_tolerance(tmp_path):
    cfg = {**SMALL, "n_replications": 1, "epsilon_tol": math.inf, "heatmaps": False}
    out = tmp_path / "o"
    assert main(["simulate", "--config", write_cfg(tmp_path, cfg), "--out", str(out),
                 "--threads", "1"]) == 0
    rows = read_replications(out / "replications.csv")
    assert len({r["estimate"] for r in rows}) == 1
    assert all(float(r["eps_growth"]) == 0 and float(r["eps_fecundity"]) == 0 for r in rows)


def test_seed_flag_changes_output(tmp_path):
    cfg = write_cfg(tmp_path, {**SMALL, "n_replications": 1, "heatmaps": False})
    for s in ("1", "2"):
        assert main(["simulate", "--config", cfg, "--seed", s, "--out", str(tmp_path / s),
                     "--threads", "1"]) == 0
    assert ((tmp_path / "1" / "replications.csv").read_bytes()
            != (tmp_path / "2" / "replications.csv").read_bytes())


def test_env_out_override(tmp_path, monkeypatch):
    monkeypatch.setenv("IPMTMLE_OUT", str(tmp_path / "env"))
    cfg = write_cfg(tmp_path, {**SMALL, "n_replications": 1, "heatmaps": False})
    assert main(["simulate", "--config", cfg, "--threads", "1"]) == 0
    assert (tmp_path / "env" / "summary.csv").exists()


def test_usage_and_config_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    bad = write_cfg(tmp_path, {"n_replications": 0})
    assert main(["simulate", "--config", bad, "--out", str(tmp_path)]) == 1
    assert main(["simulate", "--config", write_cfg(tmp_path, {"bogus": 1}),
                 "--out", str(tmp_path)]) == 1
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 1


def test_experiment_config_invariants():
    with pytest.raises(Exception):
        ExperimentConfig(n_replications=0)
    assert ExperimentConfig(initial="empirical").bandwidths == [None]


def _write(tmp_path, design, n, seed=0, **kw):
    ds = generate(SimSpec(design, n=n, **kw), np.random.default_rng(seed))
    p = tmp_path / f"{design}.csv"
    write_dataset(ds, p)
    return p


def test_analyze_rotifer_empirical(tmp_path):
    p = _write(tmp_path, "rotifer_like", 3000)
    cfg = write_cfg(tmp_path, {"target": "lambda", "initial": "empirical"})
    assert main(["analyze", str(p), "--config", cfg, "--out", str(tmp_path / "r")]) == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    assert abs(rep["estimate"] - rep["initial"]) < 1e-6 * abs(rep["initial"])
    assert "TMLE estimate" in (tmp_path / "r" / "report.txt").read_text()


def test_analyze_positivity_warning(tmp_path):
    p = tmp_path / "d.csv"
    rows = ["id,z_t,s,z_next,y_1,y_2,y_3"]
    rng = np.random.default_rng(0)
    for k in range(60):
        z = rng.choice([1, 3])
        rows.append(f"{k},{z},1,{rng.choice([1, 2, 3])},{rng.poisson(0.5)},0,0")
    p.write_text("\n".join(rows) + "\n")
    cfg = write_cfg(tmp_path, {"initial": "empirical", "schema": {"grid": "integer"}})
    assert main(["analyze", str(p), "--config", cfg, "--out", str(tmp_path / "r")]) == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    assert any("positivity" in w for w in rep["warnings"])


def test_analyze_needs_environment(tmp_path, capsys):
    p = _write(tmp_path, "basic", 200, n_classes=10)
    cfg = write_cfg(tmp_path, {"target": "log_lambda_s"})
    assert main(["analyze", str(p), "--config", cfg, "--out", str(tmp_path / "r")]) == 2
    assert "environment column required" in capsys.readouterr().err


def test_analyze_bad_data_exit_code(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("id,z_t,s,z_next,y_1\n1,0.5,7,0.6,0\n")
    assert main(["analyze", str(p), "--out", str(tmp_path)]) == 2


def test_analyze_idaho_log_lambda_s(tmp_path):
    p = _write(tmp_path, "idaho_like", 800, n_classes=20)
    cfg = write_cfg(tmp_path, {"target": "log_lambda_s", "max_iterations": 2,
                               "schema": {"columns": {"env": "year"}}})
    assert main(["analyze", str(p), "--config", cfg, "--out", str(tmp_path / "r")]) == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    assert rep["ci_low"] <= rep["estimate"] <= rep["ci_high"]


def test_oracle_check(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"n_instances": 4})
    assert main(["oracle-check", "--config", cfg, "--seed", "2"]) == 0
    first = capsys.readouterr().out
    assert main(["oracle-check", "--config", cfg, "--seed", "2"]) == 0
    assert capsys.readouterr().out == first
    strict = write_cfg(tmp_path, {"n_instances": 2, "targets": ["lambda"],
                                  "tolerances": {"lambda": 1e-30}}, "s.json")
    assert main(["oracle-check", "--config", strict]) == 3


def test_gen_data(tmp_path):
    cfg = write_cfg(tmp_path, {"design": "basic", "n": 400, "n_classes": 20, "seed": 1})
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path / "g")]) == 0
    for name in ("data.csv", "data.csv.grid.json", "truth_model.json", "truth_GM.csv",
                 "truth_F.csv", "spec.json"):
        assert (tmp_path / "g" / name).exists()
    assert main(["analyze", str(tmp_path / "g" / "data.csv"), "--out",
                 str(tmp_path / "a")]) == 0
