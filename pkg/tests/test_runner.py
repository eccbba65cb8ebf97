import json
import math

import numpy as np
import pytest

from micromacro.errors import ConfigError, ReportSchemaError
from micromacro.runner import (compare_report, dump_config, load_config, load_density_matrix, main, run,
                               save_density_matrix)


def test_minimal_config_defaults():
    cfg = load_config("scenario: fig2-sweep\nseed: 1\n")
    assert (cfg.eta, cfg.epsilon2, cfg.alpha, cfg.shots) == (0.54, 0.015, 1000.0, 1_000_000)
    assert cfg.params.t == 1.0
    assert len(cfg.windows) == 3 and len(cfg.phase_pairs) == 16


def test_config_rejections():
    with pytest.raises(ConfigError, match="eta"):
        load_config({"scenario": "fig2-sweep", "eta": 1.3})
    with pytest.raises(ConfigError, match="unknown config key 'etaa'"):
        load_config({"scenario": "fig2-sweep", "etaa": 0.5})
    with pytest.raises(ConfigError, match="asymptotic"):
        load_config({"scenario": "fig2-sweep", "alpha-squared": 1.6e8, "engine": "exact"})
    with pytest.raises(ConfigError, match="scenario"):
        load_config({"scenario": "fig9"})
    with pytest.raises(ConfigError, match="shots"):
        load_config({"scenario": "discrimination", "shots": 0})


def test_experiment_scale_config():
    cfg = load_config({"scenario": "fig2-sweep", "alpha-squared": 1.6e8})
    assert cfg.alpha == pytest.approx(math.sqrt(1.6e8))


def test_config_round_trip(tmp_path):
    for scen in ("fig2-sweep", "discrimination", "tomography", "loss-sweep", "engine-xval"):
        cfg = load_config({"scenario": scen, "seed": 3})
        path = tmp_path / f"{scen}.yaml"
        path.write_text(dump_config(cfg))
        assert load_config(path) == cfg
        assert load_config(dump_config(cfg)) == cfg


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "nope.yaml"))


def test_density_matrix_round_trip(tmp_path):
    rho = np.array([[0.5, 0.1 - 0.2j], [0.1 + 0.2j, 0.5]])
    save_density_matrix(tmp_path / "r.json", rho)
    assert np.array_equal(load_density_matrix(tmp_path / "r.json"), rho)


def _report(value, stderr=0.01, scenario="fig2-sweep"):
    return {"config": {"scenario": scenario}, "metrics": {"variance_ratio": {"value": value, "stderr": stderr}}}


def test_compare_logic():
    same = compare_report(_report(1.35), _report(1.35))
    assert same.passed and same.deltas["variance_ratio"]["delta"] == 0
    bad = compare_report(_report(1.50), _report(1.35))
    assert not bad.passed
    assert any("FAIL variance_ratio" in line for line in bad.lines())
    with pytest.raises(ReportSchemaError):
        compare_report(_report(1.35), _report(1.35, scenario="tomography"))
    with pytest.raises(ReportSchemaError):
        compare_report(_report(1.35), {"config": {"scenario": "fig2-sweep"}, "metrics": {}})


def test_discrimination_ideal_and_seed_tolerance(tmp_path):
    base = {"scenario": "discrimination", "eta": 1.0, "epsilon2": 0.0, "reference": False}
    r1 = run(load_config({**base, "seed": 1}), tmp_path / "a")
    assert r1.metrics["avg_error"]["value"] == pytest.approx(0.101, abs=0.005)
    r2 = run(load_config({**base, "seed": 2, "out": str(tmp_path / "b")}))
    cmp = compare_report(r1, r2)
    assert cmp.passed
    assert compare_report(r1, tmp_path / "a" / "report.json").passed


def test_loss_sweep_analytic(tmp_path):
    r = run(load_config({"scenario": "loss-sweep", "epsilon2": 0.0}), tmp_path)
    data = np.loadtxt(tmp_path / "concurrence_vs_loss.tsv")
    assert np.abs(data[:, 1] - 0.54 * np.sqrt(data[:, 0])).max() < 1e-9
    assert r.metrics["max_abs_deviation_from_eta_sqrt_t"]["value"] < 1e-9


def test_fig2_runner_files_deterministic(tmp_path):
    cfg = {"scenario": "fig2-sweep", "seed": 4, "shots": 50_000, "metric-min-count": 1000}
    ra = run(load_config(cfg), tmp_path / "a")
    rb = run(load_config(cfg), tmp_path / "b")
    assert ra.files == rb.files
    for name in ra.files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert ra.metrics == rb.metrics
    header = (tmp_path / "a" / "sweep_same.tsv").read_text().splitlines()[0]
    assert header.startswith("# x_center count mean")
    assert np.loadtxt(tmp_path / "a" / "sweep_same.tsv").shape == (21, 9)


def test_cli_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("scenario: engine-xval\nseed: 2\n")
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out), "--shots", "20000"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["shots"] == 20000 and report["seed"] == 2
    assert main(["compare", str(out / "report.json"), str(out / "report.json")]) == 0
    worse = dict(report)
    worse["metrics"] = {k: {"value": v["value"] + 1.0, "stderr": v["stderr"]} for k, v in report["metrics"].items()}
    (tmp_path / "worse.json").write_text(json.dumps(worse))
    assert main(["compare", str(out / "report.json"), str(tmp_path / "worse.json")]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: fig2-sweep\neta: 1.3\n")
    assert main(["run", str(bad)]) == 2
    assert "eta" in capsys.readouterr().err
    assert main(["run", str(cfg), "--engine", "exact", "--shots", "0"]) == 2
