import json
import math
import subprocess
import sys

import numpy as np
import pytest

from archetypal import hull_sq_distance, load_matrix_csv, save_matrix_csv
from archetypal.cli import ConfigError, main, parse_config_text, resolve_config


def run(*argv):
    return main([str(a) for a in argv])


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def toy_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    assert run("synth", "--set", "dataset=toy", "--out-dir", out) == 0
    return out


def test_synth_spectra_defaults(tmp_path):
    assert run("synth", "--out-dir", tmp_path, "--seed", 3) == 0
    X = load_matrix_csv(tmp_path / "X.csv")
    assert X.shape == (250, 87)
    assert load_matrix_csv(tmp_path / "H0.csv").shape == (4, 87)
    assert np.array_equal(X, load_matrix_csv(tmp_path / "X0.csv"))
    meta = read_json(tmp_path / "meta.json")
    assert (meta["seed"], meta["sigma"], meta["n"], meta["d"], meta["r"]) == (3, 0.0, 250, 87, 4)


def test_synth_with_supplied_archetypes(tmp_path):
    H0 = np.abs(np.random.default_rng(0).normal(size=(4, 87)))
    save_matrix_csv(H0, tmp_path / "mine.csv")
    assert run("synth", "--out-dir", tmp_path / "o", "--set", f"h0={tmp_path / 'mine.csv'}") == 0
    assert np.array_equal(load_matrix_csv(tmp_path / "o" / "H0.csv"), H0)
    assert load_matrix_csv(tmp_path / "o" / "X.csv").shape == (250, 87)


def test_synth_is_byte_reproducible(tmp_path):
    for name in ("a", "b"):
        assert run("synth", "--out-dir", tmp_path / name, "--seed", 8, "--set", "sigma=0.001") == 0
    for f in ("X.csv", "X0.csv", "W0.csv", "H0.csv", "meta.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_fit_writes_report(toy_dir, tmp_path):
    code = run("fit", "--set", f"x={toy_dir / 'X.csv'}", "--r", 3, "--lambda", 0.0166,
               "--solver", "palm", "--init", "spa", "--set", "max_iter=300", "--out-dir", tmp_path)
    assert code == 0
    rep = read_json(tmp_path / "report.json")
    for key in ("risk_trace", "final_grad_norm", "wall_seconds", "config", "converged", "stop_reason"):
        assert key in rep
    assert rep["config"]["lambda"] == 0.0166 and rep["solver"] == "palm"
    assert np.all(np.diff(rep["risk_trace"]) <= 1e-12)
    assert np.all(np.diff(rep["psi_trace"]) <= 1e-12)
    assert load_matrix_csv(tmp_path / "H_hat.csv").shape == (3, 2)
    assert load_matrix_csv(tmp_path / "W_hat.csv").shape == (500, 3)


def test_fit_hard_constraint_stays_in_hull(toy_dir, tmp_path):
    code = run("fit", "--set", f"x={toy_dir / 'X.csv'}", "--r", 3, "--solver", "altmin-inf",
               "--set", "max_iter=200", "--out-dir", tmp_path)
    assert code == 0
    X = load_matrix_csv(toy_dir / "X.csv")
    for h in load_matrix_csv(tmp_path / "H_hat.csv"):
        assert math.sqrt(hull_sq_distance(h, X)) <= 1e-6
    assert read_json(tmp_path / "report.json")["lambda"] == "inf"


def test_fit_unreadable_input(tmp_path, capsys):
    assert run("fit", "--set", f"x={tmp_path / 'missing.csv'}", "--r", 3, "--out-dir", tmp_path) == 2
    assert "missing.csv" in capsys.readouterr().err


def test_fit_malformed_input(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("1,2\n3\n")
    assert run("fit", "--set", f"x={tmp_path / 'bad.csv'}", "--r", 1, "--out-dir", tmp_path) == 2
    assert "line 2" in capsys.readouterr().err


def test_fit_requires_r(toy_dir, tmp_path):
    assert run("fit", "--set", f"x={toy_dir / 'X.csv'}", "--out-dir", tmp_path) == 2


def test_fit_numerical_failure_exit_code(tmp_path):
    save_matrix_csv(np.array([[1e300, 0.0], [0.0, 1e300], [1e300, 1e300]]), tmp_path / "X.csv")
    save_matrix_csv(np.array([[5e299, 0.0], [0.0, 5e299]]), tmp_path / "H.csv")
    with np.errstate(all="ignore"):
        code = run("fit", "--set", f"x={tmp_path / 'X.csv'}", "--set", f"h_init={tmp_path / 'H.csv'}",
                   "--r", 2, "--lambda", 0, "--out-dir", tmp_path)
    assert code == 3


def eval_metrics(tmp_path, H0, Hhat):
    save_matrix_csv(H0, tmp_path / "H0.csv")
    save_matrix_csv(Hhat, tmp_path / "Hhat.csv")
    code = run("eval", "--set", f"h0={tmp_path / 'H0.csv'}", "--set", f"h_hat={tmp_path / 'Hhat.csv'}",
               "--out-dir", tmp_path)
    assert code == 0
    return read_json(tmp_path / "metrics.json")


def test_eval_examples(tmp_path):
    H0 = np.random.default_rng(1).normal(size=(4, 6))
    assert eval_metrics(tmp_path, H0, H0)["loss_L"] == 0.0
    assert eval_metrics(tmp_path, H0, H0[[3, 1, 0, 2]])["loss_L"] == 0.0
    moved = H0.copy()
    moved[2, 0] += 0.1
    m = eval_metrics(tmp_path, H0, moved)
    assert m["loss_L"] == pytest.approx(0.01, rel=1e-9)
    assert m["nearest_distance"][2] == pytest.approx(0.1, rel=1e-9)
    for key in ("loss_L_sqrt", "sigma_max", "sigma_min", "kappa", "nearest_index"):
        assert key in m


def test_eval_dimension_mismatch(tmp_path):
    save_matrix_csv(np.zeros((2, 3)), tmp_path / "a.csv")
    save_matrix_csv(np.zeros((2, 4)), tmp_path / "b.csv")
    code = run("eval", "--set", f"h0={tmp_path / 'a.csv'}", "--set", f"h_hat={tmp_path / 'b.csv'}",
               "--out-dir", tmp_path)
    assert code == 2


def test_sweep_separable_zero_noise(tmp_path):
    code = run("sweep", "--set", "sigma_grid=0", "--set", "replicates=3", "--set", "separable=true",
               "--out-dir", tmp_path)
    assert code == 0
    lines = (tmp_path / "curve.csv").read_text().splitlines()
    assert lines[0].split(",")[:5] == ["sigma", "lambda", "mean_loss_sqrt", "std_loss_sqrt", "n_ok"]
    assert len(lines) == 2
    values = [float(v) for v in lines[1].split(",")[5:]]
    assert len(values) == 3 and max(values) ** 2 <= 1e-10


def test_sweep_is_deterministic(tmp_path):
    args = ["--set", "sigma_grid=0,0.001", "--set", "seeds=4,9", "--set", "max_iter=40"]
    assert run("sweep", *args, "--out-dir", tmp_path / "a") == 0
    assert run("sweep", *args, "--out-dir", tmp_path / "b") == 0
    a = (tmp_path / "a" / "curve.csv").read_bytes()
    assert a == (tmp_path / "b" / "curve.csv").read_bytes()
    assert len(a.decode().splitlines()) == 3


def test_sweep_lambda_schedule(tmp_path):
    args = ["--set", "sigma_grid=0,0.0005,0.001,0.002", "--set", "seeds=1", "--set", "max_iter=5"]
    assert run("sweep", *args, "--out-dir", tmp_path) == 0
    rows = (tmp_path / "curve.csv").read_text().splitlines()[1:]
    assert [float(r.split(",")[1]) for r in rows] == [4.0, 4.0, 4.0, 0.8]


def test_alpha_curve(tmp_path):
    args = ["--set", f"L_grid=0.1,{1 / 3!r}", "--set", "restarts=4", "--set", "max_evals=150"]
    assert run("alpha", *args, "--out-dir", tmp_path / "a") == 0
    assert run("alpha", *args, "--out-dir", tmp_path / "b") == 0
    text = (tmp_path / "a" / "alpha_curve.csv").read_text()
    assert text == (tmp_path / "b" / "alpha_curve.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == "L,alpha_hat,evals,flag"
    rows = [line.split(",") for line in lines[1:]]
    assert all(0 <= float(r[1]) <= 1 for r in rows)
    assert rows[0][3] == "" and rows[1][3] == "non_unique"


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# toy data\ndataset = toy\nn = 40\nseed = 2   # base seed\n")
    assert run("synth", "--config", cfg, "--seed", 5, "--out-dir", tmp_path / "o") == 0
    meta = read_json(tmp_path / "o" / "meta.json")
    assert meta["n"] == 40 and meta["d"] == 2
    assert meta["seed"] >= 5


def test_config_grammar():
    raw = parse_config_text("a = 1\n\n# c\nb=x = y\n")
    assert raw == {"a": ("1", "<config>:1"), "b": ("x = y", "<config>:4")}
    with pytest.raises(ConfigError):
        parse_config_text("novalue\n")
    with pytest.raises(ConfigError, match="unknown key"):
        resolve_config({"colour": ("red", "f:1")})
    with pytest.raises(ConfigError, match="ascending"):
        resolve_config({"sigma_grid": ("0.1,0", "f:2")})
    with pytest.raises(ConfigError, match="solver"):
        resolve_config({"solver": ("newton", "f:3")})
    assert resolve_config({"lambda": ("inf", "x")})["lambda"] == math.inf


def test_bad_config_exit_code(tmp_path):
    assert run("synth", "--set", "sigma=-1", "--out-dir", tmp_path) == 2
    assert run("synth", "--set", "wat", "--out-dir", tmp_path) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "archetypal", "synth", "--set", "dataset=toy", "--set", "n=20",
         "--out-dir", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "X.csv").exists()
