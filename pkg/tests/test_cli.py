import json
import subprocess
import sys

import pytest

from radqec.cli import main

RUN = ["--seed", "5", "--shots", "64", "--cycles", "12", "--protocol", "1"]


def test_help_runs_as_module():
    out = subprocess.run([sys.executable, "-m", "radqec", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "simulate" in out.stdout


def test_simulate_writes_reports(tmp_path, capsys):
    assert main(["simulate", *RUN, "--records", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["config"]["seed"] == 5 and doc["config"]["cycles"] == 12
    assert (tmp_path / "curves.csv").exists() and (tmp_path / "radiated.rec").exists()
    assert "zeta_c" in capsys.readouterr().out


def test_flags_override_toml(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("seed = 1\nshots = 64\ncycles = 12\n[transmon]\nT1_base = 8e-5\nT2_base = 1e-4\n")
    assert main(["simulate", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    assert doc["config"]["seed"] == 9 and doc["config"]["T1_base"] == 8e-5


def test_ci_requires_explicit_keys(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CI", "1")
    assert main(["simulate", "--seed", "1", "--out", str(tmp_path)]) == 2
    assert "shots" in capsys.readouterr().err
    assert main(["simulate", *RUN, "--out", str(tmp_path)]) == 0


def test_decode_stored_record(tmp_path):
    assert main(["simulate", *RUN, "--records", "--out", str(tmp_path)]) == 0
    assert main(["decode", str(tmp_path / "baseline.rec"), "--out", str(tmp_path / "dec")]) == 0
    lines = (tmp_path / "dec" / "p_L.csv").read_text().splitlines()
    assert lines[0].startswith("cycle,p_L") and len(lines) == 13
    assert len((tmp_path / "dec" / "verdicts.txt").read_text().splitlines()) == 1 + 64 * 12


def test_trace_synth_and_validate(tmp_path, capsys):
    p = tmp_path / "t.qptrace"
    assert main(["trace", "synth", "--mitigation-um", "0.5", "--duration-us", "20", "--out", str(p)]) == 0
    assert main(["trace", "validate", str(p)]) == 0
    bad = tmp_path / "bad.qptrace"
    bad.write_text("{}\n")
    assert main(["trace", "validate", str(p), str(bad)]) == 1
    assert "INVALID" in capsys.readouterr().out


def test_sweep_and_report(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", *RUN, "--axis", "mitigation_um=0,13", "--out", str(out)]) == 0
    assert json.loads((out / "sweep.json").read_text())["cells"][1]["status"] == "ok"
    a, b = tmp_path / "a", tmp_path / "b"
    main(["simulate", *RUN, "--out", str(a)])
    main(["simulate", *RUN, "--mitigation-um", "13", "--out", str(b)])
    summary = tmp_path / "s.json"
    assert main(["report", str(a / "curves.csv"), str(b / "curves.csv"), "--levels", "0", "13",
                 "--out", str(summary)]) == 0
    assert set(json.loads(summary.read_text())["delta_zeta"]) == {"0.0", "13.0"}


def test_sweep_failure_sets_exit_code(tmp_path):
    assert main(["sweep", *RUN, "--axis", "spacing_scale=1,-1", "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("argv", [["sweep", *RUN, "--axis", "nope=1"], ["simulate", "--protocol", "2", "--engine", "gad"]])
def test_bad_arguments_exit_2(argv, tmp_path):
    assert main([*argv, "--out", str(tmp_path)]) == 2
