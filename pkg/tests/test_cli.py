import json
import subprocess
import sys

import pytest

from cpdeconv.cli import main

FUNC = '{"theta": 0.41, "a": 1.0, "sigma": 0.5}'
KERN = '{"family": "green", "b": [1.0]}'


def test_landmarks(capsys):
    assert main(["landmarks", "--eta", "0.025"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["eta"] == 0.025 and 0.375 <= out["q_star"] <= 0.75


def test_landmarks_bad_eta(capsys):
    assert main(["landmarks", "--eta", "0.5"]) == 2
    assert "eta" in capsys.readouterr().err


def test_simulate_then_estimate(tmp_path, capsys):
    path = tmp_path / "p.csv"
    assert main(["simulate", "--function", FUNC, "--kernel", KERN, "--eps", "0",
                 "--seed", "3", "--out", str(path)]) == 0
    meta = json.loads(capsys.readouterr().out)
    assert meta["seed"] == 3 and meta["grid"]["n"] == 32768
    assert main(["estimate", "--path", str(path), "--kernel", KERN, "--rule", "manual",
                 "--h", "0.05", "--baseline"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert abs(rep["theta_tilde"] - 0.41) < 1e-3
    assert rep["A_hat"][0] <= rep["theta_tilde"] <= rep["A_hat"][1]
    assert rep["baseline_theta"] is not None


def test_estimate_with_class_file(tmp_path, capsys):
    spec = tmp_path / "cls.json"
    spec.write_text('{"kind": "Fm", "m": 1, "L": 10.0, "a": 1.0}')
    path = tmp_path / "p.csv"
    main(["simulate", "--function", FUNC, "--kernel", KERN, "--eps", "0.001", "--seed", "1",
          "--grid=-4.5,13.5,8192", "--out", str(path)])
    capsys.readouterr()
    assert main(["estimate", "--path", str(path), "--kernel", KERN, "--class", str(spec)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["h"] == pytest.approx(0.5 * (0.001 / 10.0) ** 0.4)


def test_estimate_missing_class(tmp_path, capsys):
    path = tmp_path / "p.csv"
    main(["simulate", "--function", FUNC, "--kernel", KERN, "--eps", "0.01", "--seed", "1",
          "--grid=-4.5,13.5,4096", "--out", str(path)])
    capsys.readouterr()
    assert main(["estimate", "--path", str(path), "--kernel", KERN]) == 2
    assert "class" in capsys.readouterr().err


def test_estimate_corrupt_path(tmp_path, capsys):
    path = tmp_path / "p.csv"
    main(["simulate", "--function", FUNC, "--kernel", KERN, "--eps", "0.01", "--seed", "1",
          "--grid=-4.5,13.5,4096", "--out", str(path)])
    path.write_text(path.read_text()[:-40])
    assert main(["estimate", "--path", str(path), "--kernel", KERN, "--rule", "manual", "--h", "0.1"]) == 2
    assert "checksum" in capsys.readouterr().err


def test_sweep_bad_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text("{ not json")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "c.json:1:" in capsys.readouterr().err


def test_bad_json_argument():
    with pytest.raises(SystemExit):
        main(["simulate", "--function", "{oops", "--kernel", KERN, "--eps", "0", "--seed", "0",
              "--out", "x.csv"])


def test_console_script():
    r = subprocess.run([sys.executable, "-m", "cpdeconv.cli", "landmarks"], capture_output=True, text=True)
    assert r.returncode == 0 and "q_zero" in r.stdout
