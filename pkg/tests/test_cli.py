"""
Test the command line: run, validate and action subcommands
"""

import csv
import json
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli.commands import read_path_csv, run
from src.cli.scenario import load_scenario
from src.domain.errors import ConfigError, StructuralError
from src.phase_model.coupling import CouplingTensor, kerr_tensor, squeezing_tensor

TINY = ["--dt", "0.25", "--dtau", "0.01", "--tau-max", "0.1", "--checkpoints", "3", "--trajectories", "5"]


def _rows(path: Path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


@pytest.fixture
def squeeze_json(tmp_path):
    path = tmp_path / "squeeze.json"
    path.write_text(json.dumps(squeezing_tensor().to_dict()))
    return path


def test_validate_accepts_squeezing(squeeze_json, capsys):
    assert run(["validate", str(squeeze_json)]) == 0
    out = capsys.readouterr().out
    assert "valid 1-mode coupling tensor" in out
    assert "partition: x=1 y=1 deterministic=0 d=0.5" in out


def test_validate_rejects_bad_tensor(tmp_path, capsys):
    tensor = CouplingTensor.zeros(1).with_term(1, 1, 0, 0, 0.5j).with_term(0, 0, 1, 1, 0.5j)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(tensor.to_dict()))

    assert run(["validate", str(path)]) == 2
    captured = capsys.readouterr()
    assert "hermiticity at (1,1,0,0)" in captured.out
    assert "error:" in captured.err


def test_validate_accepts_kerr_tensor_without_partition(tmp_path, capsys):
    path = tmp_path / "kerr.json"
    path.write_text(json.dumps(kerr_tensor(None, [[1.0]]).to_dict()))

    assert run(["validate", str(path)]) == 0
    captured = capsys.readouterr()
    assert "valid 1-mode coupling tensor" in captured.out
    assert "non-constant diffusion; use log_transform" in captured.out
    assert "partition:" not in captured.out
    assert "error:" not in captured.err


def test_run_writes_tables_and_sidecar(tmp_path, capsys):
    out = tmp_path / "out"
    assert run(["run", "--preset", "wiener", "--out", str(out)] + TINY) == 0

    printed = capsys.readouterr().out.split()
    for name in ("wiener_summary.csv", "wiener_line_x.csv", "wiener_tau_x.csv",
                 "wiener_surface_x.csv", "wiener_meta.json"):
        assert (out / name).exists()
        assert str(out / name) in printed

    summary = _rows(out / "wiener_summary.csv")
    assert len(summary) == 3 * 5
    assert {row["tau"] for row in summary} == {"0", "0.05", "0.1"}
    assert all(row["n_traj"] == "5" for row in summary)

    line = _rows(out / "wiener_line_x.csv")
    assert float(line[-1]["reference"]) == pytest.approx(2.0)

    meta = json.loads((out / "wiener_meta.json").read_text())
    assert meta["seed"] == 20240601
    assert meta["config"]["trajectories"] == 5
    assert meta["n_traj"] == 5
    assert "version" in meta and "ensemble_seconds" in meta["timings"]


def test_run_replays_its_sidecar(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert run(["run", "--preset", "wiener", "--out", str(first)] + TINY) == 0
    assert run(["run", "--config", str(first / "wiener_meta.json"), "--out", str(second)]) == 0

    a = (first / "wiener_summary.csv").read_text()
    b = (second / "wiener_summary.csv").read_text()
    assert a == b


def test_run_with_zero_tau_max(tmp_path):
    out = tmp_path / "zero"
    args = ["run", "--preset", "squeeze", "--out", str(out), "--dt", "0.25", "--tau-max", "0",
            "--trajectories", "4"]
    assert run(args) == 0

    summary = _rows(out / "squeeze_summary.csv")
    assert {row["tau"] for row in summary} == {"0"}


def test_run_freefield_follows_classical_flow(tmp_path):
    out = tmp_path / "free"
    assert run(["run", "--preset", "freefield", "--out", str(out)]) == 0

    for comp in ("q", "p"):
        rows = _rows(out / f"freefield_line_{comp}.csv")
        mean = np.array([float(r["mean"]) for r in rows])
        expected = np.array([float(r["reference_mean"]) for r in rows])
        assert np.allclose(mean, expected, atol=1e-8)


def test_run_with_snapshots(tmp_path):
    out = tmp_path / "snap"
    assert run(["run", "--preset", "wiener", "--out", str(out), "--emit-snapshots"] + TINY) == 0

    rows = _rows(out / "wiener_snapshots.csv")
    assert len(rows) == 3 * 5 * 5
    assert rows[0].keys() == {"trajectory", "tau", "t", "component", "value"}


def test_run_rejects_unknown_scenario_keys(tmp_path, capsys):
    scenario = tmp_path / "scenario.yaml"
    scenario.write_text("preset: wiener\nbogus: 1\n")

    assert run(["run", "--config", str(scenario), "--out", str(tmp_path)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_bad_flags_exit_with_config_code():
    assert run(["run", "--preset", "nope"]) == 2
    assert run(["run", "--preset", "wiener", "--trajectories", "0"]) == 2
    assert run([]) == 2


def test_scenario_precedence(tmp_path):
    from config import load_config

    scenario = tmp_path / "scenario.json"
    scenario.write_text(json.dumps({"preset": "squeeze", "trajectories": 30, "seed": 3}))

    config = load_scenario(load_config(), config_file=scenario, overrides={"seed": 9, "dt": None})
    assert config.preset == "squeeze"
    assert config.trajectories == 30
    assert config.seed == 9
    assert config.dt == 0.03

    with pytest.raises(ConfigError):
        load_scenario(load_config(), preset="custom")
    with pytest.raises(ConfigError):
        load_scenario(load_config(), preset="nope")


def test_action_on_path_csv(tmp_path, capsys):
    path = tmp_path / "path.csv"
    path.write_text("t,x,y\n0,0.5,1.0\n0.25,0.4,1.2\n0.5,0.3,1.5\n")

    assert run(["action", str(path), "--preset", "squeeze", "--scheme", "II"]) == 0
    out = capsys.readouterr().out
    assert out.count("\n") == 3
    assert "S=" in out and "physical=" in out

    table = tmp_path / "action.csv"
    assert run(["action", str(path), "--out", str(table)]) == 0
    rows = _rows(table)
    assert [r["step"] for r in rows] == ["1", "2", "total", "physical"]


def test_read_path_csv_checks_columns(tmp_path):
    path = tmp_path / "path.csv"
    path.write_text("x,z\n0,1\n1,2\n")

    with pytest.raises(StructuralError):
        read_path_csv(path, ("x", "y"), 0.0, 1.0)
    with pytest.raises(ConfigError):
        read_path_csv(tmp_path / "missing.csv", ("x",), 0.0, 1.0)

    field = read_path_csv(path, ("z", "x"), 0.0, 2.0)
    assert field.grid.eps == pytest.approx(2.0)
    assert np.allclose(field.values, [[1.0, 0.0], [2.0, 1.0]])


def test_read_path_csv_rejects_uneven_times(tmp_path):
    path = tmp_path / "uneven.csv"
    path.write_text("t,x,y\n0,0.5,1.0\n0.25,0.4,1.2\n0.6,0.3,1.5\n")

    with pytest.raises(StructuralError):
        read_path_csv(path, ("x", "y"), 0.0, 1.0)
    assert run(["action", str(path)]) == 2

    path.write_text("t,x,y\n0.1,0.5,1.0\n0.35,0.4,1.2\n0.6,0.3,1.5\n")
    field = read_path_csv(path, ("x", "y"), 0.0, 1.0)
    assert field.grid.t0 == pytest.approx(0.1)
    assert field.grid.eps == pytest.approx(0.25)
