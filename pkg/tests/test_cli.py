import csv
import json
import math

import pytest

from localtime import cli, scenario


def run(tmp_path, text, *extra):
    path = tmp_path / "scen.yaml"
    path.write_text(text)
    out = tmp_path / "out"
    return cli.main(["run", str(path), "--out-dir", str(out), *extra]), out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_spectrum_only(tmp_path):
    code, out = run(tmp_path, "model: {kind: spin, n_spins: 4}\ntasks:\n  - {type: spectrum}\n")
    assert code == 0
    rows = read_csv(out / "00-spectrum" / "levels.csv")
    assert len(rows) == 5
    assert [int(r["multiplicity"]) for r in rows] == [1, 4, 6, 4, 1]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["tasks"][0]["status"] == "ok"
    assert len(manifest["sha256"]) == 64


def test_empty_task_list(tmp_path):
    code, out = run(tmp_path, "tasks: []\n")
    assert code == 0
    assert [p.name for p in out.iterdir()] == ["manifest.json"]


def test_bundled_spin_example(tmp_path):
    out = tmp_path / "b"
    assert cli.main(["run", "--bundled", "spin_example", "--out-dir", str(out)]) == 0
    f = json.loads((out / "factors" / "factors.json").read_text())
    assert f["gap_E_over_k_at_sqrt_lambda_0.7E_over_pi"] == pytest.approx(0.18, abs=0.005)
    assert f["gap_E_at_lambda_1.1_E2_over_pi2"] == pytest.approx(0.11, abs=0.005)
    assert f["fidelity_floor_extremes"] == pytest.approx(0.7436, abs=1e-4)
    batch = read_csv(out / "classify" / "batch.csv")
    assert [r["domain"] for r in batch] == ["coarse_markovian", "non_markovian",
                                          "unitary_like", "unitary_like"]
    verdict = json.loads((out / "markov-exact" / "verdict.json").read_text())
    assert verdict["verdict"] == "non-markovian-by-composition"
    assert "spin_example" in cli.bundled_scenarios()
    assert cli.main(["run", "--bundled", "nope", "--out-dir", str(out)]) == 2


def test_byte_reproducible(tmp_path):
    text = """seed: 3
model: {kind: diagonal, energies: [0.0, 0.01, 10.0, 10.01]}
state: {kind: random}
params: {lambda: 1.0, times: {start: 0, stop: 50, num: 11}}
interaction: {kind: random, n_sys: 2, n_env: 4}
tasks:
  - {type: evolve}
  - {type: coarse}
  - {type: markov-scan, params: {family: approx, lambda: 1.0, times: {start: 1, stop: 5, num: 3}}}
  - {type: opensys}
  - {type: classify}
"""
    outs = []
    for i in range(2):
        d = tmp_path / f"r{i}"
        d.mkdir()
        code, out = run(d, text)
        assert code == 0
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*")
                   if p.is_file() and p.name != "manifest.json")
    assert len(files) >= 12
    for rel in files:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel


@pytest.mark.parametrize("text, fragment", [
    ("model: {kind: spin, n_spins: 4}\ntasks:\n  - {type: spectrum, bogus: 1}\n", ":3:"),
    ("model: {kind: spin}\ntasks: []\n", ":1:"),
    ("tasks:\n  - {type: nope}\n", ":2:"),
    ("params:\n  lambda: 1\n  lambda_scaled: 2\n", ":3:"),
    ("model: {kind: spin, n_spins: four}\n", ":1:"),
    ("tasks: [\n", "malformed"),
    ("tasks:\n  - {type: spectrum}\n  - {type: spectrum, name: 00-spectrum}\n", "duplicate"),
])
def test_schema_errors(tmp_path, capsys, text, fragment):
    code, out = run(tmp_path, text)
    assert code == 2
    err = capsys.readouterr().err
    assert "scen.yaml" in err and fragment in err
    assert not out.exists()


def test_failed_task_does_not_stop_others(tmp_path):
    text = """model: {kind: spin, n_spins: 4}
params: {lambda: 1.0}
tasks:
  - {type: coarse}
  - {type: spectrum}
"""
    code, out = run(tmp_path, text)
    assert code == 1
    m = json.loads((out / "manifest.json").read_text())
    status = {t["name"]: t for t in m["tasks"]}
    assert status["00-coarse"]["status"] == "failed"
    assert "no admissible coarse-graining" in status["00-coarse"]["error"]
    assert status["01-spectrum"]["status"] == "ok"


def test_subcommands(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["spectrum", "--model", "spin", "--n-spins", "3", "--out-dir", str(out)]) == 0
    assert len(read_csv(out / "00-spectrum" / "levels.csv")) == 4
    assert cli.main(["classify", "--model", "spin", "--n-spins", "4", "--state", "extremes",
                     "--out-dir", str(out), "--name", "cls"]) == 0
    rep = json.loads((out / "cls" / "report_0.json").read_text())
    assert rep["domain"] == "unitary_like"
    assert cli.main(["--seed", "5", "evolve", "--model", "diagonal", "--energies", "0,1,3",
                     "--state", "random", "--lambda", "2", "--times", "0:2:3",
                     "--out-dir", str(out)]) == 0
    rows = read_csv(out / "00-evolve" / "evolve.csv")
    assert [float(r["t0"]) for r in rows] == [0.0, 1.0, 2.0]
    assert cli.main(["opensys", "--interaction", "random", "--n-sys", "2", "--n-env", "3",
                     "--lambda", "1", "--out-dir", str(out), "--name", "os"]) == 0
    prof = json.loads((out / "os" / "profile.json").read_text())
    assert "decoherence_time" in prof
    assert cli.main(["coarse", "--model", "diagonal", "--energies", "0,0.01,10,10.01",
                     "--lambda", "1", "--t0", "5", "--t-prime", "2", "--out-dir", str(out),
                     "--name", "cg"]) == 0
    summary = json.loads((out / "cg" / "scan_summary.json").read_text())
    assert summary["divisibility_defect"] <= 1e-14
    assert cli.main(["markov-scan", "--model", "spin", "--n-spins", "2", "--lambda", "1",
                     "--out-dir", str(out), "--name", "ms"]) == 0
    assert cli.main(["factors", "--model", "spin", "--n-spins", "4", "--out-dir", str(out)]) == 0


def test_coarse_scan_columns(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["coarse", "--model", "diagonal", "--energies", "0,0.01,0.02",
                     "--lambda", "1", "--times", "0:10:5", "--out-dir", str(out)]) == 0
    rows = read_csv(out / "00-coarse" / "scan.csv")
    assert list(rows[0]) == ["t0", "min_eig", "criterion", "violated"]
    assert float(rows[0]["min_eig"]) == pytest.approx(1 - math.sqrt(2))
    assert rows[0]["violated"] == "true"


def test_env_overrides(tmp_path, monkeypatch):
    out = tmp_path / "env-out"
    monkeypatch.setenv("LOCALTIME_OUT_DIR", str(out))
    monkeypatch.setenv("LOCALTIME_SEED", "11")
    assert cli.main(["spectrum", "--model", "spin", "--n-spins", "2"]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["seed"] == 11
    monkeypatch.setenv("LOCALTIME_SEED", "x")
    with pytest.raises(SystemExit):
        cli.main(["spectrum", "--model", "spin", "--n-spins", "2"])


def test_opensys_lindblad_comparison(tmp_path):
    text = """interaction: {kind: grid, e_grid: [[1.0, 0.0], [0.0, 1.0]], env_probabilities: [0.5, 0.5]}
params: {lambda: 0.25, times: {start: 0, stop: 10, num: 101}}
lindblad: {gamma: [[1.0]], a_values: [[1.0, 0.0]]}
tasks:
  - {type: opensys}
"""
    code, out = run(tmp_path, text)
    assert code == 0
    rows = read_csv(out / "00-opensys" / "comparison.csv")
    assert len(rows) == 101
    assert float(rows[20]["lindblad"]) == pytest.approx(math.exp(-1.0))


def test_scenario_merge_lambda():
    scen = scenario.load_text("params: {lambda: 2.0}\ntasks:\n  - {type: spectrum, "
                              "params: {lambda_scaled: 1.0}}\n")
    merged = scenario.merged(scen.data, scen.data["tasks"][0], "params")
    assert merged == {"lambda_scaled": 1.0}
