import json
import math
import os
import subprocess
from pathlib import Path

import numpy as np
import pytest

import bpstack

CLI = os.environ.get("BPSTACK_CLI")


def test_leakage_patterns():
    names = ["age", "SBP_Mean_1h", "verify_code", "hr"]
    assert bpstack.leakage_matches(names) == ["SBP_Mean_1h", "verify_code"]
    assert bpstack.leakage_matches(names, ["age"]) == ["age"]


def test_gates_and_arithmetic():
    assert bpstack.bhs_grade(57.0, 91.1, 99.0) == "B"
    assert bpstack.aami_check(-0.15, 6.03)
    assert abs(bpstack.generalizability(6.03, 7.84) - 30.0) < 0.1
    ratio, ok = bpstack.equity_ratio({"a": 6.0, "b": 7.38})
    assert round(ratio, 2) == 1.23 and not ok


def test_pinball_and_quantile_fit():
    y = np.array([1.0, 2.0, 3.0])
    assert bpstack.pinball_loss(y, np.array([2.0, 2.0, 1.0]), 0.5) == pytest.approx(1.5)
    rng = np.random.default_rng(0)
    y = rng.normal(size=101)
    intercept, coef = bpstack.fit_quantile(np.zeros((101, 0)), y, 0.5)
    assert coef.shape == (0,)
    assert intercept == pytest.approx(np.median(y), abs=1e-6)


def test_gbm_descends():
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(200, 3))
    y = 4 * x[:, 0] + np.sin(6 * x[:, 1])
    model, mse = bpstack.fit_gbm(x, y, n_estimators=50, subsample=1.0)
    assert model.n_stages == 50
    assert all(b <= a + 1e-12 for a, b in zip(mse, mse[1:]))
    assert model.predict(x).shape == (200,)


def test_group_folds():
    groups = [f"p{i // 3}" for i in range(60)]
    folds = bpstack.plan_group_kfold(groups, 5, 7)
    by_group = {}
    for g, f in zip(groups, folds):
        by_group.setdefault(g, set()).add(f)
    assert all(len(s) == 1 for s in by_group.values())
    assert set(folds) == set(range(5))


def test_ensemble_predicts_intervals():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(150, 3))
    y = np.column_stack([120 + 10 * x[:, 0], 80 + 5 * x[:, 1]]) + rng.normal(scale=2, size=(150, 2))
    groups = [f"g{i}" for i in range(150)]
    model = bpstack.fit_ensemble(x, y, groups, gbm_estimators=30, forest_estimators=8, stack_folds=3)
    out = model.predict(x)
    for key in ("sbp", "dbp"):
        assert np.all(out[key]["upper"] >= out[key]["lower"])
        assert set(out[key]["tier"]) <= {"low", "medium", "high"}
    a_sbp, a_dbp = model.blend_alpha()
    assert 0.0 <= a_sbp <= 1.0 and 0.0 <= a_dbp <= 1.0


def test_kl_and_coverage():
    p = np.random.default_rng(3).normal(size=1000)
    assert bpstack.kl_divergence(p, p) < 0.01
    assert bpstack.coverage_probability(np.array([1.0, 5.0]), np.array([0.0, 0.0]), np.array([2.0, 2.0])) == 0.5


def test_errors_map_to_python(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("synthetic: {n_patients: 300}\nunknown_key: 1\n")
    with pytest.raises(bpstack.ConfigError):
        bpstack.train(str(bad))
    with pytest.raises(ValueError):
        bpstack.fit_quantile(np.zeros((3, 0)), np.zeros(3), 1.5)


def test_train_and_predict_round_trip(tmp_path):
    files = bpstack.generate_synthetic(200, 4, 1.0, 0.1, str(tmp_path / "data"))
    assert len(files) == 3
    cfg = tmp_path / "run.yaml"
    cfg.write_text(
        "seed: 4\n"
        "data: {cohort: data/internal.csv, schema: data/schema.yaml}\n"
        "model:\n  gbm: {n_estimators: 20}\n  forest: {n_estimators: 5}\n  stack_folds: 3\n"
        "cv: {k: 3}\n"
        "evaluation: {permutation_repeats: 1}\n"
    )
    model_path = tmp_path / "model.json"
    report = bpstack.train(str(cfg), str(model_path))
    assert "generated_at" not in report
    assert math.isfinite(report["cv_metrics"]["sbp"]["rmse"])
    assert json.loads(model_path.read_text())["format_version"] == 1
    pred = bpstack.predict_file(str(model_path), files[0])
    assert len(pred["sbp"]["point"]) > 0


@pytest.mark.skipif(not CLI, reason="BPSTACK_CLI not set")
def test_cli_exit_codes(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(
        "seed: 3\nsynthetic: {n_patients: 200}\n"
        "model:\n  gbm: {n_estimators: 20}\n  forest: {n_estimators: 5}\n  stack_folds: 3\n"
        "cv: {k: 3}\nevaluation: {permutation_repeats: 1, bootstrap_resamples: 50}\n"
    )
    out = tmp_path / "out"

    def run(*args):
        return subprocess.run([CLI, *args], capture_output=True, text=True)

    assert run("--config", str(cfg), "--output", str(out / "gen"), "generate").returncode == 0
    assert (out / "gen" / "internal.csv").exists()
    r = run("--config", str(cfg), "--output", str(out), "train")
    assert r.returncode == 0, r.stderr
    report = json.loads((out / "report.json").read_text())
    assert report["generated_at"].endswith("Z")
    r = run("--output", str(out), "predict", "--model", str(out / "model.json"),
            "--cohort", str(out / "gen" / "internal.csv"))
    assert r.returncode == 0, r.stderr
    lines = (out / "predictions.csv").read_text().splitlines()
    assert lines[0].startswith("group_id,")
    assert len(lines) == 201

    bad = tmp_path / "bad.yaml"
    bad.write_text("synthetic: {n_patients: 200}\nnope: 1\n")
    assert run("--config", str(bad), "train").returncode == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert run("predict", "--model", str(broken), "--cohort", str(out / "gen" / "internal.csv")).returncode == 1
    assert run("train", "--bogus-flag").returncode == 2
