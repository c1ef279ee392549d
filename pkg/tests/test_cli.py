import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from aitcs.cli import load_spec, main
from aitcs.io import read_matrix, read_vector, write_matrix
from aitcs.solver import SolverConfig, solve


def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.fixture
def instance(tmp_path):
    out = tmp_path / "gen"
    assert run("generate", "--seed", 3, "--m", 40, "--n", 80, "--k-star", 4, "--output-dir", out) == 0
    return out


def test_generate_outputs(instance):
    files = {p.name for p in instance.iterdir()}
    assert files == {"A.csv", "b.csv", "x_star.csv", "epsilon.csv", "problem.json", "manifest.json"}
    man = json.loads((instance / "manifest.json").read_text())
    assert man["seed"] == 3 and man["command"] == "generate"
    assert set(man) >= {"argv", "config", "version", "outputs", "duration_s"}


def test_generate_requires_seed(tmp_path):
    assert run("generate", "--m", 4, "--n", 8, "--k-star", 2, "--output-dir", tmp_path) == 2


def test_solve_noiseless(instance, tmp_path):
    out = tmp_path / "s"
    rc = run("solve", "--matrix", instance / "A.csv", "--rhs", instance / "b.csv", "--truth",
             instance / "x_star.csv", "--k", 4, "--operator", "scad", "--step", 0.9, "--output-dir", out)
    assert rc == 0
    assert (out / "trace.csv").exists()
    x = read_vector(out / "solution.csv")
    np.testing.assert_allclose(x, read_vector(instance / "x_star.csv"), atol=1e-9)
    with open(out / "trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[-1]["err_l2"]) < 1e-9


def test_solve_adaptive_matches_library(instance, tmp_path):
    out = tmp_path / "s"
    assert run("solve", "--matrix", instance / "A.csv", "--rhs", instance / "b.csv", "--k", 4,
               "--step", "adaptive", "--operator", "soft", "--output-dir", out) == 0
    A, b = read_matrix(instance / "A.csv"), read_vector(instance / "b.csv")
    ref = solve(A, b, SolverConfig(k=4, step="adaptive"), "soft")
    assert read_vector(out / "solution.csv").tobytes() == ref.x.tobytes()


def test_solve_normalize_and_bin(tmp_path, rng):
    A = rng.standard_normal((30, 50)) * rng.uniform(0.5, 3.0, size=50)
    x = np.zeros(50)
    x[[2, 17, 33]] = [1.0, -2.0, 0.7]
    write_matrix(tmp_path / "A.bin", A)
    write_matrix(tmp_path / "b.bin", (A @ x)[:, None])
    out = tmp_path / "s"
    assert run("solve", "--matrix", tmp_path / "A.bin", "--rhs", tmp_path / "b.bin", "--k", 3, "--normalize",
               "--step", 0.9, "--format", "bin", "--output-dir", out) == 0
    np.testing.assert_allclose(read_vector(out / "solution.bin"), x, atol=1e-9)


def test_solve_usage_errors(instance, tmp_path):
    base = ["solve", "--matrix", instance / "A.csv", "--rhs", instance / "b.csv", "--output-dir", tmp_path]
    assert run(*base, "--k", 0) == 2
    assert run(*base, "--k", 3, "--step", "-1") == 2
    assert run(*base, "--k", 3, "--operator", "mcp") == 2
    assert run("solve", "--matrix", tmp_path / "none.csv", "--rhs", instance / "b.csv", "--k", 2,
               "--output-dir", tmp_path) == 1


def test_analyze_identity(tmp_path, capsys):
    write_matrix(tmp_path / "I.csv", np.eye(6))
    assert run("analyze", "--matrix", tmp_path / "I.csv", "--k-star", 1, "--output-dir", tmp_path) == 0
    rep = json.loads((tmp_path / "analysis.json").read_text())
    assert rep["mu"] == 0 and all(v == 0 for v in rep["delta"].values())
    assert all(rep["conditions"].values())
    assert "[PASS] thm4_applies" in capsys.readouterr().out


def test_analyze_beta_equals_delta(tmp_path, rng):
    write_matrix(tmp_path / "A.csv", rng.standard_normal((6, 9)))
    assert run("analyze", "--matrix", tmp_path / "A.csv", "--k-star", 1, "--normalize", "--operator", "soft",
               "--output-dir", tmp_path) == 0
    rep = json.loads((tmp_path / "analysis.json").read_text())
    for key, b in rep["beta"].items():
        k, pq = key.split("|")
        if pq == "2,2":
            assert b["value"] == rep["delta"][k]


def test_analyze_errors(tmp_path, rng, capsys):
    write_matrix(tmp_path / "big.csv", rng.standard_normal((30, 60)))
    assert run("analyze", "--matrix", tmp_path / "big.csv", "--k-star", 5, "--normalize",
               "--output-dir", tmp_path) == 2
    assert "budget" in capsys.readouterr().err
    assert run("analyze", "--matrix", tmp_path / "big.csv", "--k-star", 1, "--output-dir", tmp_path) == 2


def test_experiment_seed_required(tmp_path):
    assert run("experiment", "thm4", "--output-dir", tmp_path) == 2


@pytest.mark.parametrize("spec", [
    {"kind": "nope", "name": "x"},
    {"kind": "sparsity_sweep", "name": "x", "m": 10},
    {"kind": "phase_transition", "name": "x", "n": 8, "m_grid": [4], "algorithms": ["mcp"]},
    {"kind": "verify_convergence_bound", "name": "x", "instances": [], "checks": [], "seed": 3},
    [1, 2],
])
def test_experiment_schema_errors(tmp_path, spec):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    assert run("experiment", path, "--seed", 1, "--output-dir", tmp_path) == 2


def test_experiment_missing_spec(tmp_path):
    assert run("experiment", "no_such_spec", "--seed", 1, "--output-dir", tmp_path) == 2
    (tmp_path / "bad.json").write_text("{")
    assert run("experiment", tmp_path / "bad.json", "--seed", 1, "--output-dir", tmp_path) == 2


def test_bundled_specs_validate():
    for name in ("fig3", "table5", "table6", "thm2", "thm4", "phase_gaussian", "phase_binary"):
        assert load_spec(name)["name"] == name


def test_experiment_thm4_and_replay(tmp_path):
    out = tmp_path / "a"
    assert run("experiment", "thm4", "--seed", 9, "--output-dir", out) == 0
    summary = json.loads((out / "thm4_seed9_summary.json").read_text())
    assert summary["result"]["all_hold"] and summary["result"]["total_violations"] == 0
    assert run("replay", out / "manifest.json", "--output-dir", tmp_path / "b") == 0
    for name in ("thm4_seed9.csv", "thm4_seed9_summary.json"):
        assert (out / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_experiment_sweep_and_phase_columns(tmp_path):
    sweep = {"kind": "sparsity_sweep", "name": "mini", "m": 40, "n": 60, "k_star": 3,
             "k_values": {"start": 1, "stop": 6}, "algorithms": [{"op": "scad", "step": 0.8}]}
    phase = {"kind": "phase_transition", "name": "pt", "n": 20, "m_grid": [10, 20], "trials_per_point": 3,
             "algorithms": [{"op": "scad", "step": "adaptive"}], "max_iter": 200}
    for spec in (sweep, phase):
        (tmp_path / f"{spec['name']}.json").write_text(json.dumps(spec))
        assert run("experiment", tmp_path / f"{spec['name']}.json", "--seed", 4, "--output-dir", tmp_path) == 0
    with open(tmp_path / "mini_seed4.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["k"]) for r in rows] == list(range(1, 7))
    s = json.loads((tmp_path / "mini_seed4_summary.json").read_text())
    iv = s["result"]["feasible_interval"]["SCAD(s=0.8)"]
    assert iv["interval"][0] == 3 and iv["all_fail_below_k_star"]
    with open(tmp_path / "pt_seed4.csv") as fh:
        header = next(csv.reader(fh))
    assert {"m_over_n", "k_over_m"} <= set(header)


def test_jobs_do_not_change_outputs(tmp_path):
    spec = {"kind": "normalization_compare", "name": "nc", "m": 30, "n": 50, "k_star": 3,
            "algorithms": [{"op": "hard", "step": 0.9}], "trials": 3}
    (tmp_path / "nc.json").write_text(json.dumps(spec))
    assert run("experiment", tmp_path / "nc.json", "--seed", 2, "--output-dir", tmp_path / "j1") == 0
    assert run("experiment", tmp_path / "nc.json", "--seed", 2, "--jobs", 2, "--output-dir", tmp_path / "j2") == 0
    assert (tmp_path / "j1" / "nc_seed2.csv").read_bytes() == (tmp_path / "j2" / "nc_seed2.csv").read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "aitcs", "solve", "--matrix", "x.csv", "--rhs", "y.csv",
                           "--k", "0"], capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 2
    assert "positive integer" in proc.stderr
