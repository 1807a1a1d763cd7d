import json
import subprocess
import sys

import pytest

from softpath.cli import main
from softpath.paths import StepPath, make_step_path

PIPELINE_TOML = """\
N_sweep = [10, 20]
T = 0.005
replicas = 6
seed = 3

[model]
model = "zero-range"
L = 3
alpha = 3.0

[grids]
m = [1, 3]
ell = [2, 3]
k = [1]
eps = [0.001]
"""


@pytest.fixture
def files(tmp_path):
    x = make_step_path(1, [(0, 1), (0.4, 2)])
    y = make_step_path(1, [(0, 1), (0.5, 2)])
    (tmp_path / "x.json").write_text(x.to_json())
    (tmp_path / "y.json").write_text(y.to_json())
    (tmp_path / "zr.toml").write_text("L = 3\nN = 12\nalpha = 2.0\nT = 0.01\n")
    (tmp_path / "tw.toml").write_text("d = 2\nN = 8\nell = 2\nT = 0.2\n")
    (tmp_path / "pipe.toml").write_text(PIPELINE_TOML)
    return tmp_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_metric_state(capsys):
    code, out, _ = run(capsys, "metric", "--kind", "state", "--x", "2", "--y", "inf")
    assert code == 0
    assert json.loads(out) == {"certified_error": 0.0, "distance": 0.5}


def test_metric_skorohod_with_witness(capsys, files):
    code, out, _ = run(capsys, "metric", "--kind", "skorohod", "--x", files / "x.json", "--y", files / "y.json",
                       "--witness", files / "w.json")
    assert code == 0
    d = json.loads(out)
    assert d["distance"] == pytest.approx(0.22314355, abs=1e-8)
    assert "knots" in json.loads((files / "w.json").read_text())


def test_metric_soft_terms(capsys, files):
    code, out, _ = run(capsys, "metric", "--kind", "soft", "--x", files / "x.json", "--y", files / "y.json")
    d = json.loads(out)
    assert code == 0 and len(d["terms"]) >= 2
    *levels, top = d["terms"]
    weighted = sum(t * 2.0**-m for m, t in enumerate(levels, start=1)) + top * 2.0 ** -len(levels)
    assert weighted == pytest.approx(d["distance"], abs=1e-12)


def test_metric_errors(capsys, files):
    (files / "long.json").write_text(StepPath.constant(1, 2.0).to_json())
    code, _, err = run(capsys, "metric", "--kind", "soft", "--x", files / "x.json", "--y", files / "long.json")
    assert code == 2 and "error" in err
    code, _, _ = run(capsys, "metric", "--kind", "skorohod", "--x", files / "missing.json", "--y", files / "y.json")
    assert code == 2


def test_simulate_and_verify(capsys, files):
    out = files / "ens"
    assert run(capsys, "simulate", "zero-range", "--config", files / "zr.toml", "--paths", 4, "--seed", 9, "--out", out)[0] == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["paths"] == [f"path_{i:05d}.json" for i in range(4)]
    assert len(man["seeds"]) == 4 and man["master_seed"] == 9
    code, csv_text, _ = run(capsys, "verify", "--ensemble", out, "--ell", "2,inf", "--m", "1,2", "--k", "1", "--eps", "0.001")
    assert code == 0
    lines = csv_text.splitlines()
    assert lines[0] == "condition,m,k_or_eps,ell,estimate,std_error,n_paths"
    assert len(lines) == 1 + 4 + 4 + 4
    assert all(line.endswith(",4") for line in lines[1:])


def test_simulate_trap_walk(capsys, files):
    out = files / "tw"
    assert run(capsys, "simulate", "trap-walk", "--config", files / "tw.toml", "--paths", 2, "--seed", 1, "--out", out)[0] == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["theta"] > 0 and man["spec"]["d"] == 2


def test_simulate_bad_config(capsys, files):
    (files / "bad.toml").write_text("L = 1\nN = 4\nalpha = 2.0\n")
    assert run(capsys, "simulate", "zero-range", "--config", files / "bad.toml", "--out", files / "b")[0] == 2


def test_pipeline_exit_code(capsys, files):
    code, out, _ = run(capsys, "pipeline", "--config", files / "pipe.toml", "--out", files / "rep")
    assert code == 0
    assert "trace_horizon: ok" in out
    assert {p.name for p in (files / "rep").iterdir()} == {"report.json", "report.csv", "conditions.csv"}


def test_family_test(capsys, files):
    code, out, _ = run(capsys, "family-test", "--family", "yn", "--n-max", 16, "--out", files / "y.csv")
    assert code == 0 and "DIVERGES" in out
    assert len((files / "y.csv").read_text().splitlines()) == 1 + 4


def _snapshot(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_reruns_byte_identical(capsys, files):
    snaps = []
    for rep in ("r1", "r2"):
        base = files / rep
        run(capsys, "simulate", "zero-range", "--config", files / "zr.toml", "--paths", 3, "--seed", 5, "--out", base / "sim")
        run(capsys, "simulate", "trap-walk", "--config", files / "tw.toml", "--paths", 2, "--seed", 5, "--out", base / "tw")
        run(capsys, "verify", "--ensemble", base / "sim", "--ell", "2,3", "--m", "1", "--k", "1,2", "--eps", "0.01",
            "--out", base / "v.csv")
        run(capsys, "pipeline", "--config", files / "pipe.toml", "--out", base / "pipe")
        run(capsys, "family-test", "--family", "xn", "--out", base / "f.csv")
        run(capsys, "metric", "--kind", "skorohod", "--x", files / "x.json", "--y", files / "y.json", "--witness", base / "w.json")
        snaps.append(_snapshot(base))
    assert snaps[0] == snaps[1]
    assert len(snaps[0]) == 4 + 3 + 1 + 3 + 1 + 1


def test_module_entry_point(files):
    r = subprocess.run([sys.executable, "-m", "softpath", "metric", "--kind", "state", "--x", "3", "--y", "3"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["distance"] == 0.0
