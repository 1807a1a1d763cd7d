import csv
import io
import json

import numpy as np
import pytest

from softpath.errors import BadConfiguration
from softpath.harness import (
    ConvergenceReport,
    ExperimentConfig,
    emit_report,
    family_path,
    ks_exponential,
    markov_diagnostic,
    path_convergence_test,
    report_rows,
    run_metastability_pipeline,
)
from softpath.metrics import level_distances, soft_dist
from softpath.paths import StepPath, make_step_path

BASE = {
    "model": {"model": "zero-range", "L": 3, "alpha": 3.0},
    "N_sweep": [10, 20],
    "T": 0.005,
    "replicas": 20,
    "grids": {"m": [1, 3], "ell": [2, 3, 4], "k": [1, 2], "eps": [1e-5, 1e-4, 1e-3]},
    "seed": 7,
}


@pytest.fixture(scope="module")
def small_report():
    return run_metastability_pipeline(ExperimentConfig.from_mapping(BASE))


def test_config_parsing(tmp_path):
    cfg = ExperimentConfig.from_mapping(BASE)
    assert cfg.m_grid == [1, 3] and cfg.eps_grid == [1e-5, 1e-4, 1e-3]
    assert cfg.spec_for(20).N == 20
    toml = tmp_path / "c.toml"
    toml.write_text(
        'N_sweep = [5, 6]\nT = 0.1\nreplicas = 2\nm_grid = [1]\nell_grid = [2]\nk_grid = [1]\neps_grid = [0.1]\n'
        '[model]\nmodel = "zero-range"\nL = 2\nalpha = 2.0\n'
    )
    c = ExperimentConfig.from_toml(toml)
    assert c.N_sweep == [5, 6] and c.model["L"] == 2


@pytest.mark.parametrize(
    "change",
    [{"N_sweep": [20, 10]}, {"N_sweep": [10, 10]}, {"N_sweep": []}, {"grids": {"m": [], "ell": [1], "k": [1], "eps": [0.1]}}, {"T": 0.0}],
)
def test_config_validation(change):
    with pytest.raises(BadConfiguration):
        ExperimentConfig.from_mapping({**BASE, **change})


def test_pipeline_invariants(small_report):
    r = small_report
    assert r.hard_ok
    assert set(r.invariants) == {"trace_horizon", "well_agreement", "level_equality", "valued_in_wells", "condition_c_monotone"}
    assert all(v["paths"] == 40 for v in r.invariants.values())
    for s in r.per_N:
        assert 0 <= s["delta_fraction"] <= 1
        assert sum(s["occupation"]) == pytest.approx(1.0, abs=1e-12)
    tr = r.trends["delta_fraction"]
    assert tr["series"] == [s["delta_fraction"] for s in r.per_N]
    assert tr["N"] == [10, 20]


def test_single_N_sweep_is_insufficient():
    cfg = ExperimentConfig.from_mapping({**BASE, "N_sweep": [10], "replicas": 4})
    r = run_metastability_pipeline(cfg)
    assert all(t["verdict"] == "insufficient points" for t in r.trends.values())


def test_json_and_csv_agree(small_report, tmp_path):
    emit_report(small_report, tmp_path, "json")
    emit_report(small_report, tmp_path, "csv")
    js = json.loads((tmp_path / "report.json").read_text())
    rows = list(csv.reader((tmp_path / "report.csv").open()))
    assert tuple(rows[0]) == ("N", "statistic", "value")
    by_N = {s["N"]: s for s in js["per_N"]}
    for N, stat, val in rows[1:]:
        if stat == "delta_fraction":
            assert float(val) == by_N[int(N)]["delta_fraction"]
        if stat.startswith("occupation_"):
            assert float(val) == by_N[int(N)]["occupation"][int(stat.split("_")[1]) - 1]
    cond = list(csv.reader((tmp_path / "conditions.csv").open()))
    assert cond[0] == ["N", "condition", "m", "k_or_eps", "ell", "estimate", "std_error", "n_paths"]
    a_rows = [r for r in cond[1:] if r[1] == "a" and r[0] == "20"]
    assert len(a_rows) == 3 * 2
    js_a = {(str(r["ell"]), str(r["m"])): r["estimate"] for r in js["conditions"]["20"]["rows"] if r["condition"] == "a"}
    for r in a_rows:
        assert float(r[5]) == js_a[(r[4], r[2])]


def test_empty_report_has_header_only(tmp_path):
    emit_report(ConvergenceReport(), tmp_path, "csv")
    assert (tmp_path / "report.csv").read_text() == "N,statistic,value\n"
    assert (tmp_path / "conditions.csv").read_text() == "condition,m,k_or_eps,ell,estimate,std_error,n_paths\n"
    assert report_rows(ConvergenceReport()) == []


def test_report_deterministic(tmp_path):
    cfg = ExperimentConfig.from_mapping({**BASE, "replicas": 6})
    outs = []
    for name in ("a", "b"):
        files = emit_report(run_metastability_pipeline(cfg), tmp_path / name, "json")
        files += emit_report(run_metastability_pipeline(cfg), tmp_path / name, "csv")
        outs.append([open(f, "rb").read() for f in files])
    assert outs[0] == outs[1]


def test_trap_walk_pipeline():
    cfg = ExperimentConfig.from_mapping({
        **BASE,
        "model": {"model": "trap-walk", "d": 2, "ell": 3, "M": 3},
        "N_sweep": [8, 12],
        "T": 0.5,
        "replicas": 5,
    })
    assert run_metastability_pipeline(cfg).hard_ok


def test_ks_and_markov_diagnostics():
    rng = np.random.default_rng(3)
    good = ks_exponential(rng.exponential(2.0, 2000))
    assert good["mean"] == pytest.approx(2.0, rel=0.1) and good["p_value"] > 1e-3
    bad = ks_exponential(np.full(500, 1.0) + rng.uniform(0, 1e-3, 500))
    assert bad["p_value"] < 1e-6
    iid = [rng.integers(1, 4, 400).tolist() for _ in range(5)]
    assert markov_diagnostic(iid)["p_value"] > 1e-3
    cyc = [[1, 2, 1, 3] * 200]
    assert markov_diagnostic(cyc)["p_value"] < 1e-6


@pytest.mark.parametrize("n", range(3, 21))
def test_xn_closed_form(n):
    assert soft_dist(family_path("xn", n), StepPath.constant(1)).distance == pytest.approx((1 - 1 / n) * 2.0 ** -(n - 1), abs=1e-6)


def test_family_verdicts():
    assert path_convergence_test("xn").verdict == "CONVERGES"
    assert path_convergence_test("zn").verdict == "CONVERGES"
    y = path_convergence_test("yn")
    assert y.verdict == "DIVERGES"
    assert all(d[2] == pytest.approx(2 / 3) for d in y.levels)
    assert y.ns == [2, 4, 8, 16, 32, 64]
    buf = io.StringIO()
    y.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "n,soft_dist," + ",".join(f"d_{m}" for m in range(1, 9))
    assert len(lines) == 7


def test_family_path_shapes():
    assert family_path("xn", 4) == make_step_path(1, [(0, 1), (0.3, 4), (0.55, 1)])
    assert family_path("zn", 4) == make_step_path(1, [(0, 1), (0.3, 4)])
    assert family_path("yn", 1) == make_step_path(1, [(0, 1), (0.3, 3)])
    assert level_distances(family_path("yn", 1000), StepPath.constant(1), 3)[2] >= 0.05
    with pytest.raises(ValueError):
        family_path("wn", 3)
