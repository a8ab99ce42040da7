import json
import subprocess
import sys

import numpy as np
import pytest

from sepfeat.cli import ExperimentConfig, main, resolve
from sepfeat.errors import ConfigError
from sepfeat.io import read_json, read_rows, write_counts
from sepfeat.preprocessing import CountMatrix

SMALL = ["--k-true", "4", "--d-total", "30", "--n-per-cluster", "30"]
SCORE = ["--t-proposals", "8", "--n-subsample", "60", "--k-min", "3", "--k-max", "6"]


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "syn"), "--seed", "3", *SMALL]) == 0
    data = str(root / "syn" / "data.csv")
    assert main(["score", "--out", str(root / "score"), "--seed", "4", "--input", data, *SCORE]) == 0
    assert main(["null", "--out", str(root / "null"), "--seed", "4", "--input", data, *SCORE]) == 0
    assert main(["eval", "--out", str(root / "eval"), "--scores", str(root / "null" / "scores.csv"),
                 "--mask", str(root / "syn" / "data.mask.csv")]) == 0
    return root


def test_synth_outputs(run_dir):
    names = set(files(run_dir / "syn"))
    assert {"data.csv", "data.labels.csv", "data.mask.csv", "summary.json"} <= names
    manifest = read_json(run_dir / "syn" / "manifest.json")
    assert manifest["command"] == "synth" and manifest["seed"] == 3
    assert {"numpy", "scipy", "numba", "clarabel", "sepfeat", "python"} <= set(manifest["versions"])
    assert read_json(run_dir / "syn" / "summary.json") == {"N": 120, "D": 30, "D_s": 6}


def test_score_writes_g_only(run_dir):
    header, rows = read_rows(run_dir / "score" / "scores.csv")
    assert header == ["feature", "g", "z"]
    assert len(rows) == 30 and all(r[2] == "" for r in rows)
    hist_header, hist = read_rows(run_dir / "score" / "histogram.csv")
    assert hist_header[:3] == ["bin_left", "bin_right", "count"]
    assert sum(int(r[2]) for r in hist) == 30


def test_null_writes_z(run_dir):
    _, rows = read_rows(run_dir / "null" / "scores.csv")
    g = np.array([float(r[1]) for r in rows])
    z = np.array([float(r[2]) for r in rows])
    s = read_json(run_dir / "null" / "summary.json")
    np.testing.assert_allclose(z, (g - s["null_mean"]) / s["null_std"])


def test_eval_outputs(run_dir):
    header, rows = read_rows(run_dir / "eval" / "roc.csv")
    assert header == ["threshold", "fpr", "tpr"]
    assert rows[0] == ["inf", "0.0", "0.0"] and rows[-1][1:] == ["1.0", "1.0"]
    s = read_json(run_dir / "eval" / "summary.json")
    assert {"auroc", "weight_ratio", "entropy", "lambda_hat", "T"} <= set(s)
    assert s["T"] == 8 and s["auroc"] > 0.9


@pytest.mark.parametrize("step", ["syn", "score", "null", "eval"])
def test_replay_is_byte_identical(run_dir, tmp_path, step):
    assert main(["replay", str(run_dir / step / "manifest.json"), "--out", str(tmp_path / "again")]) == 0
    assert files(tmp_path / "again") == files(run_dir / step)


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 9, "k-true": 3, "d_total": 12, "n_per_cluster": 10}))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o"), "--d-total", "15"]) == 0
    m = read_json(tmp_path / "o" / "manifest.json")
    assert m["config"]["d_total"] == 15 and m["config"]["k_true"] == 3 and m["seed"] == 9


def test_experiment_config_round_trip(tmp_path):
    cfg = resolve("synth", {"out": str(tmp_path), "seed": 1})
    doc = json.loads(json.dumps(cfg.to_json()))
    assert ExperimentConfig.from_json(doc) == cfg
    doc["config"]["bogus"] = 1
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(doc)


def test_unknown_key_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1, "colour": "red"}))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    rec = json.loads(capsys.readouterr().err)
    assert rec["error"] == "config_error"


def test_unparsable_config_exit_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path), "--seed", "1"]) == 2


def test_missing_seed_exit_2(tmp_path):
    assert main(["synth", "--out", str(tmp_path)]) == 2


def test_bad_seed_rejected(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--out", str(tmp_path), "--seed", "-1"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["synth", "--out", str(tmp_path), "--seed", str(2 ** 64)])


def test_module_error_exit_1(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path), "--seed", "1", "--d-total", "5"]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "spec_invalid"


def test_missing_input_exit_1(tmp_path, capsys):
    assert main(["score", "--out", str(tmp_path), "--seed", "1", "--input", str(tmp_path / "none.csv")]) == 1
    assert "error" in json.loads(capsys.readouterr().err)


def test_scaling_smoke_cell(tmp_path):
    out = tmp_path / "grid"
    assert main(["scaling", "--out", str(out), "--seed", "1", "--ratios", "2", "--n-values", "140",
                 "--t-proposals", "50"]) == 0
    header, rows = read_rows(out / "scaling.csv")
    assert {"D", "D_s", "N", "T", "weight_ratio", "auroc", "entropy"} <= set(header)
    assert len(rows) == 1
    row = dict(zip(header, rows[0]))
    assert (row["D"], row["D_s"], row["N"], row["T"]) == ("42", "21", "140", "50")
    assert main(["replay", str(out / "manifest.json"), "--out", str(tmp_path / "again")]) == 0
    assert files(tmp_path / "again") == files(out)


def test_sweep_s_small(tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep-s", "--out", str(out), "--seed", "2", "--s-values", "1,6", "--k-true", "3",
                 "--n-per-cluster", "40", "--x-target", "3", "--t-proposals", "10"]) == 0
    header, rows = read_rows(out / "sweep_s.csv")
    assert [r[0] for r in rows] == ["1.0", "6.0"]
    roc_header, roc_rows = read_rows(out / "sweep_s_roc.csv")
    assert roc_header == ["S", "threshold", "fpr", "tpr"] and roc_rows


def test_preprocess_and_expand(tmp_path):
    rng = np.random.default_rng(0)
    lam = np.r_[rng.uniform(0.5, 5, 6), 0.0]
    c = CountMatrix(rng.poisson(lam * 30, size=(40, 7)), [f"g{j}" for j in range(7)], [f"c{i}" for i in range(40)])
    write_counts(c, tmp_path / "counts.csv")
    pre = tmp_path / "pre"
    assert main(["preprocess", "--out", str(pre), "--seed", "5", "--counts", str(tmp_path / "counts.csv"),
                 "--depth", "20"]) == 0
    s = read_json(pre / "summary.json")
    assert "g6" in s["genes_dropped"]
    header, rows = read_rows(pre / "data.csv")
    # fake z-scores selecting two genes
    scores = tmp_path / "scores.csv"
    scores.write_text("feature,g,z\n" + "".join(f"{g},0.1,{2.0 if i < 2 else 0.0}\n" for i, g in enumerate(header[1:])))
    ex = tmp_path / "ex"
    assert main(["expand", "--out", str(ex), "--input", str(pre / "data.csv"), "--scores", str(scores),
                 "--k", "1"]) == 0
    _, sel = read_rows(ex / "selected.csv")
    assert [r[1] for r in sel[:2]] == ["selected", "selected"]
    assert main(["replay", str(pre / "manifest.json"), "--out", str(tmp_path / "pre2")]) == 0
    assert files(tmp_path / "pre2") == files(pre)


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "sepfeat", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("synth", "score", "null", "eval", "scaling", "sweep-s", "replay"):
        assert cmd in out.stdout
