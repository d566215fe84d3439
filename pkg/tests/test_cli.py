import json

import pandas as pd

from glucose_mbrl.cli import main
from glucose_mbrl.metrics import MetricsReport


def write_config(tmp_path, text):
    path = tmp_path / "run.yaml"
    path.write_text(text)
    return path


def write_report(path, profile_id, agent, completion, tir):
    path.mkdir(parents=True)
    report = MetricsReport(profile_id=profile_id, agent=agent, episodes=30, evaluation_window=30, completion_rate_pct=completion, time_in_range_pct=tir)
    (path / "metrics.json").write_text(report.model_dump_json())


def test_run_prints_report(tmp_path, capsys):
    config = write_config(tmp_path, "profile_id: adult#001\nagent: bb\nepisodes: 1\n")
    assert main(["-q", "run", str(config), "--output", str(tmp_path / "out")]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["agent"] == "bb"
    assert (tmp_path / "out" / "metrics.json").exists()


def test_run_with_missing_profile_is_a_config_error(tmp_path, capsys):
    config = write_config(tmp_path, "agent: bb\n")
    assert main(["-q", "run", str(config)]) == 1
    assert "profile_id" in capsys.readouterr().err


def test_runtime_failure_exits_with_two(tmp_path):
    blocker = tmp_path / "taken"
    blocker.write_text("")
    config = write_config(tmp_path, "profile_id: adult#001\nagent: bb\nepisodes: 1\n")
    assert main(["-q", "run", str(config), "--output", str(blocker)]) == 2


def test_report_tables(tmp_path, capsys):
    write_report(tmp_path / "a", "adult#001", "bb", 96.7, 58.7)
    write_report(tmp_path / "b", "adult#001", "mbrl_with_uncertainty", 100.0, 73.3)
    write_report(tmp_path / "c", "child#001", "bb", 0.0, None)
    assert main(["-q", "report", str(tmp_path), "--metric", "tir"]) == 0
    out = capsys.readouterr().out
    header = out.splitlines()[1]
    assert header.index("BBController") < header.index("MBRL")
    assert "73.3" in out
    assert "n/a" in out


def test_report_without_metrics_fails(tmp_path):
    assert main(["-q", "report", str(tmp_path)]) == 1


def test_sweep_prints_both_tables(tmp_path, capsys):
    config = write_config(tmp_path, "profile_id: adult#001\nagent: bb\nepisodes: 1\n")
    assert main(["-q", "sweep", str(config), "--profiles", "adult#001", "child#001", "--agents", "bb"]) == 0
    out = capsys.readouterr().out
    assert "completion:" in out and "tir:" in out
    assert "BBController" in out


def test_curves_writes_csv(tmp_path):
    config = write_config(
        tmp_path,
        "profile_id: adult#001\nepisodes: 2\nensemble_size: 2\nbootstrap_episodes: 1\nhorizon: 6\nesn: {reservoir_size: 30, connectivity: 0.3, washout: 0}\n",
    )
    output = tmp_path / "curves.csv"
    assert main(["-q", "curves", str(config), "--seeds", "0", "--output", str(output)]) == 0
    frame = pd.read_csv(output)
    assert sorted(frame["mode"].unique()) == ["with_uncertainty", "without_uncertainty"]
    assert len(frame) == 4


def test_sweep_with_unknown_agent_is_a_config_error(tmp_path, capsys):
    config = write_config(tmp_path, "profile_id: adult#001\nagent: bb\nepisodes: 1\n")
    assert main(["-q", "sweep", str(config), "--profiles", "adult#001", "--agents", "nope", "--output", str(tmp_path / "out")]) == 1
    assert "nope" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_sweep_with_unknown_profile_is_a_config_error(tmp_path, capsys):
    config = write_config(tmp_path, "profile_id: adult#001\nagent: bb\nepisodes: 1\n")
    assert main(["-q", "sweep", str(config), "--profiles", "adult#9", "--agents", "bb"]) == 1
    assert "--profiles" in capsys.readouterr().err
