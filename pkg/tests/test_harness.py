import json

import numpy as np
import pytest
import yaml

from vgne.harness import EXPERIMENTS, load_config, main, run_experiment, validate_config
from vgne.metric import window_from_constants
from vgne.game import GameConstants
from vgne.traces import read_csv


def write_cfg(path, **cfg):
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def test_empty_config_reports_missing_experiment(tmp_path, capsys):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    assert main(["validate", str(p)]) == 1
    assert "missing: experiment" in capsys.readouterr().out


def test_valid_fig1_config_is_ok(tmp_path, capsys):
    p = write_cfg(tmp_path / "c.yaml", experiment="fig1-dayahead", horizon=96, alpha=0.0125)
    assert main(["validate", p]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_every_bad_key_is_listed():
    rep = validate_config({"experiment": "synthetic-full", "bogus": 1, "other": 2,
                           "alpha": "fast"})
    assert not rep.ok
    assert "unknown key: bogus" in rep.errors and "unknown key: other" in rep.errors
    assert any(e.startswith("alpha:") for e in rep.errors)


@pytest.mark.parametrize("cfg, fragment", [
    ({"experiment": "nope"}, "unknown experiment"),
    ({"experiment": "fig2-realtime", "K": [1, 0]}, "K:"),
    ({"experiment": "fig2-realtime", "horizon": 0}, "horizon"),
    ({"experiment": "fig2-realtime", "gamma": -1.0}, "gamma"),
    ({"experiment": "synthetic-distributed", "graph": "star"}, "graph"),
    ({"experiment": "synthetic-full", "mu_F": 1.0}, "constants"),
    ({"experiment": "fig1-dayahead", "horizon": True}, "horizon"),
])
def test_schema_violations(cfg, fragment):
    rep = validate_config(cfg)
    assert not rep.ok and any(fragment in e for e in rep.errors)


def test_alpha_outside_window_warns_with_interval():
    cfg = {"experiment": "synthetic-full", "alpha": 0.5, "mu_F": 1, "ell_F": 2,
           "mu_A": 1, "ell_A": 1.5}
    rep = validate_config(cfg)
    assert rep.ok and len(rep.warnings) == 1
    lo, hi = window_from_constants(GameConstants(1.0, 2.0, 1.0, 1.5))
    assert f"({lo:g}, {hi:g})" in rep.warnings[0]
    assert validate_config({**cfg, "alpha": hi / 2}).warnings == []


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    for name in EXPERIMENTS:
        assert name in out


def test_load_errors(tmp_path):
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2
    p = tmp_path / "list.yaml"
    p.write_text("- 1\n- 2\n")
    assert main(["validate", str(p)]) == 2
    with pytest.raises(Exception):
        load_config(p)


def test_run_rejects_invalid(tmp_path):
    p = write_cfg(tmp_path / "c.yaml", experiment="synthetic-full", bogus=1)
    assert main(["run", p, "--out", str(tmp_path / "o")]) == 1


def test_divergence_exit_code(tmp_path):
    p = write_cfg(tmp_path / "c.yaml", experiment="synthetic-distributed", alpha=5.0,
                  rounds=200)
    assert main(["run", p, "--out", str(tmp_path / "o")]) == 3


def test_synthetic_full_run(tmp_path, capsys):
    p = write_cfg(tmp_path / "c.yaml", experiment="synthetic-full", seed=1)
    assert main(["run", p, "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["converged"] and summary["rate_ok"]
    assert json.loads(capsys.readouterr().out) == summary
    rows = read_csv(tmp_path / "o" / "full.csv")
    assert list(rows[0]) == ["iter", "residual", "lyapunov"]


def test_seed_override_and_determinism(tmp_path):
    p = write_cfg(tmp_path / "c.yaml", experiment="synthetic-distributed", graph="matchings",
                  rounds=300)
    assert main(["run", p, "--out", str(tmp_path / "a"), "--seed", "4"]) == 0
    assert main(["run", p, "--out", str(tmp_path / "b"), "--seed", "4"]) == 0
    assert main(["run", p, "--out", str(tmp_path / "c")]) == 0
    a = (tmp_path / "a" / "rounds.csv").read_bytes()
    assert a == (tmp_path / "b" / "rounds.csv").read_bytes()
    assert a != (tmp_path / "c" / "rounds.csv").read_bytes()
    assert json.loads((tmp_path / "a" / "summary.json").read_text())["seed"] == 4
    s = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert s["invariance_ok"] and s["linear_decrease"]


def test_synthetic_tracking_summary(tmp_path):
    summary = run_experiment({"experiment": "synthetic-tracking", "horizon": 80, "K": [1, 5],
                              "phi_amp": 0.05}, tmp_path)
    for K in ("1", "5"):
        assert summary["full"][K]["bound_ok"]
        d = summary["distributed"][K]
        assert d["invariance_ok"] and d["psi_bound_ok"]
    assert (tmp_path / "tracking_dist_K5.csv").exists()


def test_fig1_small(tmp_path):
    s = run_experiment({"experiment": "fig1-dayahead", "horizon": 2, "max_iter": 2000},
                       tmp_path)
    assert s["lyapunov_monotone"] and s["log_lyapunov_slope"] < 0
    assert s["invariance_ok"] and s["min_barrier_quantity"] > 0
    rows = read_csv(tmp_path / "fig1.csv")
    assert len(rows) == s["rounds"] + 1


def test_realtime_small(tmp_path):
    cfg = {"experiment": "fig3-violation", "horizon": 6, "K": [1, 20]}
    s = run_experiment(cfg, tmp_path)
    assert s["K"] == [1, 20] and s["invariance_ok"] and s["barrier_positive"]
    rows = read_csv(tmp_path / "violation_K20.csv")
    assert [r["t"] for r in rows] == [1, 2, 3, 4, 5, 6]
    s2 = run_experiment({**cfg, "experiment": "fig2-realtime"}, tmp_path / "f2")
    assert s2["mean_tracking_error"] == s["mean_tracking_error"]
    assert np.isfinite(s2["eta"])
