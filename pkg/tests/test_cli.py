from __future__ import annotations

import json
import subprocess
import sys

import pytest

from equidyn import cli, endo, library


def run_json(argv, capsys):
    code = cli.run(argv)
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 else json.loads(err))


def test_validate_map(capsys):
    code, rep = run_json(["validate-map", "--map", "z2"], capsys)
    assert code == 0
    assert rep["estimates"]["k"] == 1 and rep["estimates"]["d"] == 2
    assert rep["estimates"]["nondegenerate"] is True
    assert rep["seed"] == 0 and rep["map_hash"]


def test_sample_mu_tree(tmp_path, capsys):
    code, rep = run_json(
        ["sample-mu", "--map", "z2", "--method", "tree", "--x", "2,0", "--n", "12", "--out", str(tmp_path)],
        capsys,
    )
    assert code == 0
    lines = (tmp_path / "measure.csv").read_text().splitlines()
    assert lines[0] == "re0,im0,re1,im1,weight"
    assert len(lines) == 4097
    assert rep["estimates"]["discrepancy_to_unit_circle"] < 0.02
    assert (tmp_path / "sample-mu.json").exists()


def test_lov(capsys):
    code, rep = run_json(["lov", "--map", "z2", "--n", "5", "--samples", "100000"], capsys)
    assert code == 0
    assert rep["targets"]["volume"] == 31
    last = rep["estimates"]["volumes"][-1]
    assert last["target"] == 31 and abs(last["value"] - 31) < 0.02 * 31
    assert last["std_error"] > 0


def test_load_map_file(tmp_path):
    path = tmp_path / "pow.json"
    path.write_text(endo.dumps_map(library.power_map_p2(2)))
    f = cli.load_map(str(path))
    assert f.k == 2 and f.d == 2
    assert cli.load_map(str(library.bundled_path("z2"))).d == 2


def test_schema_error_exit_code(tmp_path, capsys):
    bad = {"k": 1, "d": 2, "components": [
        [{"exps": [2, 0], "re": 1.0, "im": 0.0}],
        [{"exps": [1, 0], "re": 1.0, "im": 0.0}],
    ]}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    code, err = run_json(["validate-map", "--map", str(path)], capsys)
    assert code == 2
    assert err["error"] == "schema_error" and "term 0" in err["message"]


def test_usage_errors_exit_2(capsys):
    code, err = run_json(["fiber", "--map", "z2"], capsys)
    assert code == 2 and "error" in err
    code, err = run_json(["validate-map", "--map", "no-such-map"], capsys)
    assert code == 2


def test_exceptional_start_exit_2(capsys):
    code, err = run_json(["pullback-tree", "--map", "z2", "--x", "0,0", "--n", "3"], capsys)
    assert code == 2 and err["error"] == "exceptional_start"
    code, err = run_json(["sample-mu", "--map", "z2", "--x", "0,0", "--n", "3"], capsys)
    assert code == 2 and err["error"] == "exceptional_start"


def test_fiber_and_sigma(capsys):
    code, rep = run_json(["fiber", "--map", "power2_p2", "--y", "4:9:1"], capsys)
    assert code == 0
    assert sum(p["multiplicity"] for p in rep["estimates"]["points"]) == 4
    code, rep = run_json(["sigma-count", "--dk", "4", "--n", "2", "--sigma", "0.5"], capsys)
    assert code == 0 and rep["estimates"]["counts"][0]["count"] == "7"


def _outputs(tmp, argv, threads):
    d = tmp / f"t{threads}"
    assert cli.run(argv + ["--out", str(d), "--threads", str(threads)]) == 0
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.mark.parametrize(
    "argv",
    [
        ["sample-mu", "--map", "z2m2", "--method", "backward", "--samples", "3000", "--seed", "11"],
        ["sample-mu", "--map", "z2m1", "--method", "cesaro", "--n", "8", "--samples", "3000", "--seed", "5"],
        ["lov", "--map", "perturbed", "--n", "2", "--samples", "3000", "--seed", "3"],
        ["lyapunov", "--map", "z2m1", "--n", "10", "--samples", "600", "--depth", "20", "--seed", "2"],
    ],
    ids=["backward", "cesaro", "lov", "lyapunov"],
)
def test_determinism_across_threads(tmp_path, capsys, argv):
    a = _outputs(tmp_path, argv, 1)
    b = _outputs(tmp_path, argv, 4)
    c = _outputs(tmp_path / "again", argv, 4)
    capsys.readouterr()
    assert a == b == c


def test_env_threads_fallback(tmp_path, capsys, monkeypatch):
    argv = ["lov", "--map", "z2", "--n", "3", "--samples", "2000"]
    monkeypatch.setenv("EQUIDYN_THREADS", "3")
    assert cli.run(argv + ["--out", str(tmp_path / "env")]) == 0
    monkeypatch.delenv("EQUIDYN_THREADS")
    assert cli.run(argv + ["--out", str(tmp_path / "plain")]) == 0
    capsys.readouterr()
    assert (tmp_path / "env" / "lov.json").read_bytes() == (tmp_path / "plain" / "lov.json").read_bytes()


def test_console_script():
    proc = subprocess.run(
        [sys.executable, "-m", "equidyn.cli", "validate-map", "--map", "z3"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["estimates"]["d"] == 3
