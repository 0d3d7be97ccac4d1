"""Command line entry points, exercised in-process through main()."""
import json
import shutil
import subprocess
import sys

import pytest

from crchain import cli
from crchain.harness import CSV_HEADER, FL_HEADER, RunResult
from crchain.simchain import EventLog


@pytest.fixture
def small_config(tmp_path):
    """A config tiny enough that every subcommand finishes in well under a second."""
    cfg = {
        "label": "clitest",
        "seed": 11,
        "n_nodes": 4,
        "repetitions": 2,
        "workload": {"freq": 0.05, "n_requests": 3},
        "hyper": {"commit_quorum": 3, "reveal_quorum": 3, "difficulty": "2^256"},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_parse_scaled_int():
    assert cli.parse_scaled_int("2^253") == 2 ** 253
    assert cli.parse_scaled_int(" 1000 ") == 1000
    assert cli.parse_scaled_int("2^0") == 1


def test_parse_values_per_axis():
    assert cli.parse_values("freq", "0.001,0.01") == [0.001, 0.01]
    assert cli.parse_values("difficulty", "2^253,2^255") == [2 ** 253, 2 ** 255]
    assert cli.parse_values("quorum", "5,11,21") == [5, 11, 21]


def test_load_config_coerces_difficulty(small_config):
    cfg = cli.load_config(small_config)
    assert cfg.label == "clitest"
    assert cfg.n_nodes == 4
    assert cfg.hyper.difficulty == 2 ** 256
    assert cfg.workload.n_requests == 3


def test_run_subcommand_writes_artifacts(tmp_path, small_config, capsys):
    log_path = tmp_path / "events.log"
    csv_path = tmp_path / "row.csv"
    rc = cli.main(
        [
            "run",
            "--config", small_config,
            "--naive",
            "--export-log", str(log_path),
            "--csv", str(csv_path),
        ]
    )
    out = capsys.readouterr().out
    assert rc == 0
    assert "tasks per second:" in out
    assert "assets conserved:  True" in out
    assert "speedup:" in out

    lines = log_path.read_text().splitlines()
    assert any(",request," in ln for ln in lines)
    assert any(",commit," in ln for ln in lines)
    rows = csv_path.read_text().splitlines()
    assert rows[0] == ",".join(CSV_HEADER)
    assert rows[1].startswith("clitest:freq=0.05,freq,0.05,0,")


def test_run_plain_only_reports_base_rate(capsys):
    rc = cli.main(["run", "--freq", "0", "--requests", "0", "--until", "200", "--nodes", "3"])
    assert rc == 0
    assert "tasks per second:  1000.0000" in capsys.readouterr().out


def test_run_reports_violation_as_exit_code(monkeypatch, capsys):
    broken = RunResult(
        seed=1, blocks=10, tasks_completed=5, tasks_per_second=1.0, timeouts=0,
        latency_min=2, latency_avg=2.0, latency_max=2, total_gas=0,
        conserved=False, wall_s=0.0, log=EventLog(),
    )
    monkeypatch.setattr(cli, "run_single", lambda cfg, until=None, keep=False: broken)
    rc = cli.main(["run"])
    captured = capsys.readouterr()
    assert rc == 1
    assert "invariant violation" in captured.err
    assert "assets conserved:  False" in captured.out


def test_sweep_subcommand_writes_axis_csv(tmp_path, small_config, capsys):
    rc = cli.main(
        [
            "sweep",
            "--config", small_config,
            "--axis", "freq",
            "--values", "0.02,0.05",
            "--out", str(tmp_path),
        ]
    )
    assert rc == 0
    path = tmp_path / "sweep_freq.csv"
    assert path.exists()
    rows = path.read_text().splitlines()
    assert rows[0] == ",".join(CSV_HEADER)
    # 2 axis points x (2 repetitions + mean + std)
    assert len(rows) == 1 + 2 * 4
    assert str(path) in capsys.readouterr().out


def test_cost_subcommand_prints_phase_table(tmp_path, small_config, capsys):
    rc = cli.main(["cost", "--config", small_config, "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "91699" in out      # request phase
    assert "296471" in out     # commit phase
    assert "47389" in out      # reveal phase
    rows = (tmp_path / "cost.csv").read_text().splitlines()
    assert rows[0] == "request_id,phase,gas,usd_eth,usd_polygon"
    assert len(rows) > 1


def test_fl_demo_subcommand(tmp_path, capsys):
    rc = cli.main(
        [
            "fl-demo",
            "--nodes", "5",
            "--rounds", "3",
            "--dim", "4",
            "--window", "2",
            "--seed", "1",
            "--out", str(tmp_path),
        ]
    )
    out = capsys.readouterr().out
    assert rc == 0
    assert "accepted rounds:" in out
    assert "replicas in sync:    True" in out
    rows = (tmp_path / "fl.csv").read_text().splitlines()
    assert rows[0] == ",".join(FL_HEADER)
    assert len(rows) >= 2


def test_subcommand_is_required():
    with pytest.raises(SystemExit):
        cli.main([])


def test_console_script_is_installed():
    exe = shutil.which("crchain")
    assert exe, "crchain entry point not on PATH"
    proc = subprocess.run([exe, "--help"], capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0
    assert "run" in proc.stdout and "sweep" in proc.stdout


def test_module_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "crchain.cli", "cost", "--requests", "2", "--out", "/tmp/cliout"],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0
    assert "phase gas" in proc.stdout
