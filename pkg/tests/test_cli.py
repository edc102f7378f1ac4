import csv
import io
import json
import subprocess
import sys

import pytest

from labelnoise import __version__
from labelnoise.cli import build_parser, main


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_version_is_json(capsys):
    code, out, _ = run(["--version"], capsys)
    assert code == 0 and json.loads(out)["version"] == __version__


def test_config_schema_is_json(capsys):
    code, out, _ = run(["--config-schema"], capsys)
    assert code == 0 and "properties" in json.loads(out)


def test_theory_curve_fig3_parameters(capsys):
    code, out, _ = run(["theory-curve", "--c", "10", "--m-bar", "0.9", "--lambda", "50", "--eps-grid", "0:1:0.1"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 11
    assert float(rows[9]["noisy_acc"]) == pytest.approx(0.1, abs=1e-12)
    assert float(rows[9]["clean_acc"]) == pytest.approx(0.45, abs=1e-12)


def test_theory_curve_json(capsys):
    code, out, _ = run(["theory-curve", "--c", "4", "--s", "1", "--format", "json", "--eps-grid", "0:1:0.5"], capsys)
    assert code == 0 and out.endswith("\n")
    assert len(json.loads(out)["rows"]) == 3


@pytest.fixture
def dataset(tmp_path, capsys):
    data, mix = tmp_path / "d.csv", tmp_path / "m.json"
    code, _, _ = run(["mixture-gen", "--c", "4", "--n-per-class", "25", "--save-mixture", str(mix), "--out", str(data)], capsys)
    assert code == 0
    return data, mix


def test_mixture_gen_resamples_saved_mixture(dataset, tmp_path, capsys):
    _, mix = dataset
    out = tmp_path / "m2.json"
    code, _, _ = run(["mixture-gen", "--mixture", str(mix), "--seed", "7", "--save-mixture", str(out)], capsys)
    assert code == 0 and json.loads(out.read_text()) == json.loads(mix.read_text())
    code, a, _ = run(["mixture-gen", "--mixture", str(mix), "--seed", "7", "--n-per-class", "5"], capsys)
    code, b, _ = run(["mixture-gen", "--mixture", str(mix), "--seed", "8", "--n-per-class", "5"], capsys)
    assert a != b and a.splitlines()[0] == b.splitlines()[0]


def test_noise_apply_zero_is_identity(dataset, capsys):
    data, _ = dataset
    code, out, _ = run(["noise-apply", "--data", str(data), "--kind", "uniform", "--epsilon", "0"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert all(r["label"] == r["noisy_label"] for r in rows)


def test_noise_apply_feature_dependent_report(dataset, capsys):
    data, mix = dataset
    code, out, _ = run(["noise-apply", "--data", str(data), "--mixture", str(mix), "--kind", "gap_min",
                        "--epsilon", "0.2", "--mode", "exact_count", "--format", "json"], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["realized_rate"] == pytest.approx(0.2)
    assert report["spec"]["alpha"] > 0


def test_bayes_eval(dataset, capsys):
    _, mix = dataset
    code, out, _ = run(["bayes-eval", "--mixture", str(mix), "--mode", "noisy_plugin", "--kind", "uniform",
                        "--epsilon", "0.75", "--labels", "noisy", "--n", "20000", "--format", "json"], capsys)
    assert code == 0
    assert json.loads(out)["accuracy"] == pytest.approx(0.25, abs=0.015)


def test_mlp_train_with_checkpoint(dataset, tmp_path, capsys):
    data, _ = dataset
    ck = tmp_path / "ck.json"
    code, out, _ = run(["mlp-train", "--data", str(data), "--labels", "true", "--epochs", "5",
                        "--test", str(data), "--checkpoint", str(ck), "--format", "json"], capsys)
    assert code == 0 and ck.exists()
    assert 0.0 <= json.loads(out)["test_accuracy"] <= 1.0


def test_sweep_run_twice_identical(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epsilons": [0.0, 0.5], "noise": ["uniform"], "replicates": 2}))
    outs = []
    for i, jobs in enumerate(("1", "2")):
        path = tmp_path / f"out{i}.csv"
        code, _, _ = run(["sweep-run", "--config", str(cfg), "--jobs", jobs, "--out", str(path)], capsys)
        assert code == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_sweep_run_overlay(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epsilons": [0.5], "noise": ["uniform"], "replicates": 1}))
    code, out, _ = run(["sweep-run", "--config", str(cfg), "--m-bar", "0.9"], capsys)
    assert code == 0 and out.splitlines()[0].endswith("theory_noisy,theory_clean")


def test_embed_inject(tmp_path, capsys):
    feats = tmp_path / "f.csv"
    feats.write_text("id,label,f0\n" + "".join(f"r{i},{i % 3},{i % 3 + 0.01 * i}\n" for i in range(30)))
    report = tmp_path / "r.json"
    code, out, _ = run(["embed-inject", "--features", str(feats), "--epsilon", "0.2", "--spread", "1",
                        "--count-mode", "exact_count", "--report", str(report)], capsys)
    assert code == 0
    assert out.splitlines()[0] == "id,label,noisy_label,flipped"
    assert sum(int(r["flipped"]) for r in csv.DictReader(io.StringIO(out))) == 6
    assert json.loads(report.read_text())["realized_rate"] == pytest.approx(0.2)


def test_argument_errors_exit_2(capsys):
    assert run(["theory-curve", "--c", "10", "--bogus"], capsys)[0] == 2
    assert run(["theory-curve", "--c", "10", "--eps-grid", "1:0"], capsys)[0] == 2
    assert run(["theory-curve", "--c", "10", "--m-bar", "1.5"], capsys)[0] == 2
    assert run([], capsys)[0] == 2


def test_out_parent_must_exist(tmp_path, capsys):
    code, _, err = run(["theory-curve", "--c", "3", "--out", str(tmp_path / "no" / "x.csv")], capsys)
    assert code == 2 and "does not exist" in err


def test_data_errors_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,label,noisy_label,f0\n0,1,,abc\n")
    code, out, err = run(["noise-apply", "--data", str(bad), "--kind", "uniform", "--epsilon", "0.1"], capsys)
    assert code == 3 and out == "" and "line 2" in err
    assert run(["noise-apply", "--data", str(tmp_path / "missing.csv"), "--kind", "uniform", "--epsilon", "0.1"],
               capsys)[0] == 3


def test_numerical_errors_exit_4(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("id,label,noisy_label,f0\n0,0,,1e308\n1,1,,-1e308\n")
    mix = tmp_path / "m.json"
    mix.write_text(json.dumps({"means": [[0.0], [1.0]], "priors": [1.0, 0.0]}))
    code, _, err = run(["noise-apply", "--data", str(data), "--mixture", str(mix), "--kind", "gap_max",
                        "--epsilon", "0.5"], capsys)
    assert code == 4, err


def test_help_lists_defaults():
    text = build_parser()._subparsers._group_actions[0].choices["theory-curve"].format_help()
    text = " ".join(text.split())
    assert "--m-bar" in text and "(default: 0.9)" in text
    assert "(default: None)" not in text


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "labelnoise.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["name"] == "labelnoise"
