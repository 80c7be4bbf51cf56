import json

import numpy as np
import pytest

from catfuse.cli import main


@pytest.fixture
def toy(tmp_path):
    (tmp_path / "toy.csv").write_text("g,y\n1,1\n1,1\n2,-1\n2,-1\n")
    (tmp_path / "toy.json").write_text(json.dumps({"columns": [
        {"name": "g", "role": "categorical", "levels": ["1", "2"]}, {"name": "y", "role": "response"}]}))
    return tmp_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fit_toy(toy, capsys):
    out = toy / "coef.json"
    code, _, _ = run(capsys, "fit", "--data", toy / "toy.csv", "--schema", toy / "toy.json",
                     "--lambda", 0, "--lambda0", 0, "--out", out)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["categorical"]["g"] == {"1": 1.0, "2": -1.0} and doc["alpha"] == 0
    man = json.loads((toy / "coef.manifest.json").read_text())
    assert man["command"] == "fit" and str(out) in man["outputs"]


def test_fit_is_reproducible(toy, capsys):
    args = ["fit", "--data", toy / "toy.csv", "--schema", toy / "toy.json", "--lambda", 0.01, "--lambda0", 0.01]
    run(capsys, *args, "--out", toy / "a.json")
    run(capsys, *args, "--out", toy / "b.json")
    assert (toy / "a.json").read_bytes() == (toy / "b.json").read_bytes()


def test_config_file_and_flag_precedence(toy, capsys):
    cfg = toy / "cfg.json"
    cfg.write_text(json.dumps({"data": str(toy / "toy.csv"), "schema": str(toy / "toy.json"),
                               "lambda": 1000.0, "lambda0": 0.0}))
    code, out, _ = run(capsys, "fit", "--config", cfg, "--lambda", 0)
    assert code == 0 and json.loads(out)["objective"] == 0


def test_usage_errors(toy, capsys):
    code, _, err = run(capsys, "fit", "--bogus")
    assert code == 2 and "usage" in err
    assert run(capsys)[0] == 2
    code, _, err = run(capsys, "fit", "--data", toy / "toy.csv", "--schema", toy / "toy.json")
    assert code == 2 and "--lam" in err


def test_data_error(toy, capsys):
    (toy / "bad.csv").write_text("g,y\n3,1\n")
    code, _, _ = run(capsys, "fit", "--data", toy / "bad.csv", "--schema", toy / "toy.json",
                     "--lambda", 0, "--lambda0", 0)
    assert code == 3


def test_guard_exit(tmp_path, capsys):
    rows = "\n".join(f"{k % 6},{k}" for k in range(12))
    (tmp_path / "d.csv").write_text("g,y\n" + rows + "\n")
    (tmp_path / "s.json").write_text(json.dumps({"columns": [
        {"name": "g", "role": "categorical"}, {"name": "y", "role": "response"}]}))
    code, _, err = run(capsys, "solve-exact", "--data", tmp_path / "d.csv", "--schema", tmp_path / "s.json",
                       "--lambda", 0.1, "--lambda0", 0.1)
    assert code == 4 and "p_j<=5" in err


def test_solve_exact_and_export(toy, capsys):
    code, out, _ = run(capsys, "solve-exact", "--data", toy / "toy.csv", "--schema", toy / "toy.json",
                       "--lambda", 10, "--lambda0", 0)
    assert code == 0 and json.loads(out)["upper_bound"] == pytest.approx(11)
    lp = toy / "m.lp"
    code, _, _ = run(capsys, "export-mip", "--data", toy / "toy.csv", "--schema", toy / "toy.json",
                     "--lambda", 1, "--lambda0", 1, "--bigM", 3, "--out", lp)
    assert code == 0 and lp.read_text().count("fuse_") == 2


def test_segment(tmp_path, capsys):
    (tmp_path / "s.csv").write_text("value,weight\n3,1\n0,1\n3,1\n")
    code, out, _ = run(capsys, "segment", "--input", tmp_path / "s.csv", "--lambda", 0.5, "--lambda0", 0.5,
                       "--out", tmp_path / "b.csv")
    assert code == 0 and json.loads(out)["objective"] == pytest.approx(1.5)
    assert (tmp_path / "b.csv").read_text().splitlines()[1:] == ["0,3", "1,0", "2,3"]


def test_synth_eval_tune_benchmark(tmp_path, capsys):
    d = tmp_path / "syn"
    code, out, _ = run(capsys, "synth", "--setting", "eq10", "--r1", 1, "--r2", 1, "--q", 2, "--qs", 1,
                       "--n", 40, "--sigma", 0.5, "--out-dir", d)
    assert code == 0 and (d / "manifest.json").exists()
    code, out, _ = run(capsys, "tune", "--train", d / "train.csv", "--val", d / "val.csv",
                       "--schema", d / "schema.json", "--n-lambda", 3, "--out", tmp_path / "best.json")
    assert code == 0
    code, out, _ = run(capsys, "eval", "--coef", tmp_path / "best.json", "--data", d / "test.csv",
                       "--schema", d / "schema.json", "--beta-star", d / "beta_star.json")
    rep = json.loads(out)
    assert code == 0 and rep["r2"] > 0.5 and 0 < rep["purity"] <= 1
    code, out, _ = run(capsys, "benchmark", "--r1", 1, "--r2", 1, "--q", 2, "--qs", 1, "--n", 30,
                       "--reps", 2, "--n-lambda", 2, "--threads", 1, "--out", tmp_path / "b.jsonl")
    assert code == 0 and len((tmp_path / "b.jsonl").read_text().splitlines()) == 3
