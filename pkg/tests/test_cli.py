import json
import subprocess
import sys

import pytest

from tailproc.cli import run
from tailproc.models import PRESETS


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv("TAILPROC_OUT_DIR", str(tmp_path / "env-out"))
    return tmp_path


def test_validate_example(out, capsys):
    assert run(["validate", "--preset", "example-5.1", "--b", "1.5", "--alpha", "1.2"]) == 0
    line = capsys.readouterr().out
    theta = (1 + 1.5**1.2) / (2 + 1.5**1.2)
    assert f"valid spectral tail process; theta = {theta:.6g}" in line
    assert (out / "env-out" / "validate.csv").exists()


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_validates(out, name):
    assert run(["validate", "--preset", name]) == 0


def test_validate_invalid_law_exits_2(out, capsys):
    law = out / "bad.txt"
    law.write_text("0.5 | 0:1\n0.5 | 0:1,1:1\n")
    assert run(["validate", "--atoms-file", str(law), "--alpha", "1"]) == 2
    assert "NOT a spectral tail process" in capsys.readouterr().out


def test_derive_prints_three_atoms(out, capsys):
    assert run(["derive", "--preset", "example-1.1", "--out-dir", str(out / "d")]) == 0
    text = capsys.readouterr().out
    assert text.count("0.333333") == 3 and "theta = 0.666667" in text
    rows = (out / "d" / "derive.csv").read_text().splitlines()
    assert rows[0] == "law,weight,atom" and len(rows) == 1 + 3 + 2


def test_duality(out):
    assert run(["duality", "--preset", "three-lag-remark", "--p", "0.4"]) == 0


@pytest.mark.parametrize(
    "argv,msg",
    [
        (["simulate-tail", "--preset", "example-1.1"], "--seed"),
        (["derive", "--preset", "example-7"], "unknown preset"),
        (["derive", "--preset", "example-5.2", "--b", "2"], "unexpected keyword"),
        (["derive", "--model-file", "/nonexistent.yaml"], "nonexistent"),
        (["simulate-tail", "--seed", "1", "--u-target", "0"], "u_target"),
    ],
)
def test_errors_exit_1(out, capsys, argv, msg):
    assert run(argv) == 1
    assert msg in capsys.readouterr().err


def test_config_file_and_flag_priority(out, capsys):
    cfg = out / "cfg.yaml"
    cfg.write_text("preset: example-5.1\nb: 0.5\nalpha: 0.8\nout-dir: %s\n" % (out / "c"))
    assert run(["validate", "--config", str(cfg)]) == 0
    assert f"theta = {2 / (2 + 0.5 ** 0.8):.6g}" in capsys.readouterr().out
    assert run(["validate", "--config", str(cfg), "--b", "2"]) == 0
    assert f"theta = {(1 + 2 ** 0.8) / (2 + 2 ** 0.8):.6g}" in capsys.readouterr().out
    summary = json.loads((out / "c" / "validate-summary.json").read_text())
    assert summary["options"]["b"] == 2 and summary["exit_status"] == 0
    cfg.write_text("bogus: 1\n")
    assert run(["validate", "--config", str(cfg)]) == 1


def test_model_file(out, capsys):
    mf = out / "m.json"
    mf.write_text(json.dumps({"innovation": {"alpha": 1.2}, "stencil": {"coefficients": ["1", "0.5"]}, "name": "fixed"}))
    assert run(["derive", "--model-file", str(mf)]) == 0
    assert "fixed" in capsys.readouterr().out
    assert run(["derive", "--model-file", str(mf), "--preset", "iid"]) == 1


def test_stochastic_artifacts_are_reproducible(out):
    args = ["randomized-origin", "--preset", "example-5.2", "--n", "1e5", "--u-target", "200", "--replicates", "300", "--seed", "7"]
    assert run(args + ["--out-dir", str(out / "a")]) == 0
    assert run(args + ["--out-dir", str(out / "b"), "--workers", "3"]) == 0
    a = (out / "a" / "randomized-origin.csv").read_bytes()
    assert a == (out / "b" / "randomized-origin.csv").read_bytes()
    assert a.startswith(b"pattern_id,description,count,empirical_freq,exact_prob,z_score\n")


def test_json_format(out):
    assert run(["campbell", "--n", "2000", "--replicates", "200", "--seed", "3", "--format", "json", "--out-dir", str(out)]) == 0
    data = json.loads((out / "campbell.json").read_text())
    assert data["columns"][0] == "functional" and data["rows"][0][0] == "t-origin"


def test_module_entry_point(out):
    proc = subprocess.run([sys.executable, "-m", "tailproc", "validate", "--preset", "iid", "--out-dir", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0 and "theta = 1" in proc.stdout
