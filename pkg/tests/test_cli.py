import subprocess
import sys

import pytest
import yaml

from scalarflow import flow
from scalarflow.cli import main

from conftest import CONFIGS


def _config(tmp_path, name, **changes):
    data = yaml.safe_load((CONFIGS / name).read_text())
    for section, value in changes.items():
        data[section] = value
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def test_run_converged_writes_artifacts(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(CONFIGS / "exp_warp_coarse.yaml"), "--out-dir", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert names == {"config.yaml", "audit.csv", "trace.csv", "final.snap", "final.csv",
                     "report.txt"}
    report = dict(line.split(" = ", 1) for line in (out / "report.txt").read_text().splitlines())
    assert report["verdict"] == "converged"
    assert report["cutoff_inactive"] == "true"
    assert "audit_c1" in report


def test_trace_is_byte_identical_across_runs(tmp_path):
    cfg = str(CONFIGS / "exp_warp_coarse.yaml")
    assert main(["--out-dir", str(tmp_path / "a"), "run", cfg]) == 0
    assert main(["--threads", "1", "run", cfg, "--out-dir", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/trace.csv").read_bytes() == (tmp_path / "b/trace.csv").read_bytes()
    assert (tmp_path / "a/final.snap").read_bytes() == (tmp_path / "b/final.snap").read_bytes()


def test_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "o")
    assert main(["run", str(CONFIGS / "flat_static.yaml"), "--out-dir", out]) == 1
    assert "inadmissible upper barrier" in capsys.readouterr().err
    tmax0 = _config(tmp_path, "exp_warp_coarse.yaml",
                    flow={"scheme": "heun", "dt_safety": 0.45, "t_max": 0.0})
    assert main(["run", str(tmax0), "--out-dir", out]) == 2
    assert main(["run", str(tmp_path / "nope.yaml"), "--out-dir", out]) == 1
    neg = _config(tmp_path, "exp_warp_coarse.yaml",
                  f={"family": "time-profile",
                     "params": {"amplitude": -1.0, "rate": 1.0, "center": 1.0}})
    assert main(["audit", str(neg), "--out-dir", out]) == 4
    assert main(["run", str(neg), "--out-dir", out]) == 4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_breakdown_exit_code(tmp_path, monkeypatch):
    # no physical config reliably breaks down, so force steps far past the CFL limit
    monkeypatch.setattr(flow, "_cfl_dt", lambda config, ev, h: 1e6)
    cfg = _config(tmp_path, "exp_warp_perturbed_small.yaml",
                  flow={"max_halvings": 2},
                  grid={"n": 2, "shape": [16, 16], "length": 6.283185307179586})
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--out-dir", str(out)]) == 3
    assert "verdict = breakdown" in (out / "report.txt").read_text()


def test_invariant_exit_code(tmp_path):
    cfg = _config(tmp_path, "exp_warp_perturbed_small.yaml",
                  flow={"vtilde_ceiling": 1.000000001, "t_max": 1.0},
                  grid={"n": 2, "shape": [32, 32], "length": 6.283185307179586})
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--out-dir", str(out)]) == 5
    assert "monitor = vtilde_ceiling" in (out / "report.txt").read_text()


def test_audit_outputs(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["audit", str(CONFIGS / "normal_tilt.yaml"), "--out-dir", str(out)]) == 0
    text = capsys.readouterr().out
    assert "strong_bound_raw     False" in text
    assert "strong_bound_cutoff  True" in text
    assert (out / "audit.csv").exists()


def test_verify_suites(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "cutoff", "--out-dir", str(out)]) == 0
    assert main(["verify", "geometry", "--out-dir", str(out)]) == 0
    first = (out / "verify_cutoff.csv").read_bytes()
    main(["verify", "cutoff", "--out-dir", str(out)])
    assert (out / "verify_cutoff.csv").read_bytes() == first
    assert first.splitlines()[0] == b"suite,item,samples,failures,worst_margin"


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "scalarflow", "verify", "cutoff", "--samples",
                           "500", "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "FAIL" not in proc.stdout
