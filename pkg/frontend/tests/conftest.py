import json
import subprocess

import pytest

SMALL_CONFIG = {
    "label": "base",
    "seed": 31,
    "n_nodes": 4,
    "repetitions": 2,
    "workload": {"freq": 0.05, "n_requests": 3},
    "hyper": {"commit_quorum": 3, "reveal_quorum": 3, "difficulty": "2^256"},
}


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    """Real CSVs produced by the crchain command line, consumed as-is."""
    root = tmp_path_factory.mktemp("plotdata")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(SMALL_CONFIG))
    subprocess.run(
        ["crchain", "sweep", "--config", str(cfg), "--axis", "freq",
         "--values", "0.02,0.05", "--out", str(root)],
        check=True, capture_output=True, text=True,
    )
    subprocess.run(
        ["crchain", "sweep", "--config", str(cfg), "--axis", "timeout",
         "--values", "10,25", "--out", str(root)],
        check=True, capture_output=True, text=True,
    )
    subprocess.run(
        ["crchain", "fl-demo", "--nodes", "5", "--rounds", "3", "--dim", "4",
         "--window", "2", "--seed", "7", "--out", str(root)],
        check=True, capture_output=True, text=True,
    )
    return root


@pytest.fixture(scope="session")
def freq_csv(data_dir):
    return data_dir / "sweep_freq.csv"


@pytest.fixture(scope="session")
def timeout_csv(data_dir):
    return data_dir / "sweep_timeout.csv"


@pytest.fixture(scope="session")
def fl_csv(data_dir):
    return data_dir / "fl.csv"
