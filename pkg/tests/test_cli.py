import json

import pandas as pd
import pytest

from formation_sensing_system.cognition.networks import PolicyParams
from formation_sensing_system.infrastructure.providers import get_provider
from run_simulation import main


@pytest.fixture
def config_file(tmp_path, scenario_data):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario_data))
    return str(path)


def test_missing_config_exits_with_config_error(tmp_path):
    assert main(["run", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == 2


def test_invalid_config_exits_with_config_error(tmp_path, scenario_data):
    scenario_data["dt"] = 0
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(scenario_data))
    assert main(["train", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_run_needs_a_checkpoint(config_file, tmp_path):
    assert main(["run", "--config", config_file, "--out", str(tmp_path)]) == 2
    missing = str(tmp_path / "none.json")
    assert main(["run", "--config", config_file, "--checkpoint", missing, "--out", str(tmp_path)]) == 2


def test_train_run_and_report(config_file, tmp_path):
    out = tmp_path / "out"
    assert main(["train", "--config", config_file, "--out", str(out)]) == 0
    rewards = pd.read_csv(out / "rewards.csv")
    assert len(rewards) == 2

    policy = str(out / "policy.json")
    assert main(["run", "--config", config_file, "--checkpoint", policy, "--out", str(out)]) in (0, 3)
    records = pd.read_csv(out / "records.csv")
    assert len(records) == 6
    summary = json.loads((out / "summary.json").read_text())
    assert summary["scenario"] == "unit-sensing"
    assert (out / "trace.log").exists()

    figure = tmp_path / "fig11.csv"
    assert main(["report", "--records", str(out / "records.csv"), "--fig", "fig11", "--out", str(figure)]) == 0
    assert len(pd.read_csv(figure)) == summary["sensing"]["sensing_cycles"]

    curve = tmp_path / "fig8.csv"
    assert main(["report", "--records", str(out / "rewards.csv"), "--fig", "fig8", "--out", str(curve)]) == 0
    assert list(pd.read_csv(curve).columns) == ["episode", "mean_reward", "moving_average"]


@pytest.fixture
def zero_policy(tmp_path):
    return get_provider(str(tmp_path / "zero.json")).save(PolicyParams.zeros(), meta={"mode": "awpf"})


def test_runs_write_identical_record_files(config_file, zero_policy, tmp_path):
    for name in ("first", "second"):
        argv = ["run", "--config", config_file, "--checkpoint", zero_policy, "--out", str(tmp_path / name)]
        assert main(argv) in (0, 3)
    first = (tmp_path / "first" / "records.csv").read_bytes()
    assert first == (tmp_path / "second" / "records.csv").read_bytes()


def test_report_compares_fixed_and_variable_formations(config_file, zero_policy, tmp_path):
    variable, fixed = tmp_path / "vf", tmp_path / "ff"
    assert main(["run", "--config", config_file, "--checkpoint", zero_policy, "--out", str(variable)]) in (0, 3)
    argv = ["run", "--config", config_file, "--checkpoint", zero_policy, "--fixed-formation", "--out", str(fixed)]
    assert main(argv) in (0, 3)

    figure = tmp_path / "fig11.csv"
    argv = ["report", "--records", str(variable / "records.csv"), "--baseline", str(fixed / "records.csv")]
    assert main(argv + ["--fig", "fig11", "--out", str(figure)]) == 0
    frame = pd.read_csv(figure)
    assert list(frame.columns) == ["t", "vf_position_error", "ff_position_error", "vf_eps_p", "ff_eps_p"]
    assert frame["ff_eps_p"].gt(0).all()


def test_report_rejects_unknown_figures(tmp_path):
    path = tmp_path / "records.csv"
    pd.DataFrame({"t": [0.0]}).to_csv(path, index=False)
    assert main(["report", "--records", str(path), "--fig", "fig1", "--out", str(tmp_path / "x.csv")]) == 2
