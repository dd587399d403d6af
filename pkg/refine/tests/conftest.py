import json
import subprocess
import sys

import pytest

# the imaging toolkit is consumed strictly through its CLI and file formats
TOOLKIT = [sys.executable, "-m", "nfmimo.cli"]

SMALL_CONFIG = {
    "array": {
        "tx": [[-0.10, 0.0, 0.0], [0.10, 0.0, 0.0]],
        "rx": [[0.0, -0.10, 0.0], [0.0, 0.0, 0.0], [0.0, 0.10, 0.0]],
    },
    "f_min_hz": 4e9,
    "f_max_hz": 16e9,
    "n_steps": 4,
    "grid": {"nx": 9, "ny": 9, "nz": 17, "dx_m": 0.02, "dy_m": 0.02,
             "dz_m": 0.0125, "center_m": [0.0, 0.0, 0.5]},
}


def run_toolkit(*args) -> subprocess.CompletedProcess:
    result = subprocess.run(
        TOOLKIT + [str(a) for a in args], capture_output=True, text=True
    )
    assert result.returncode == 0, f"toolkit failed: {result.stderr}"
    return result


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Tiny exported dataset (with system matrix) from the imaging toolkit."""
    root = tmp_path_factory.mktemp("small_dataset")
    config_path = root / "config.json"
    config_path.write_text(json.dumps(SMALL_CONFIG))
    out_dir = root / "export"
    run_toolkit(
        "export-dataset", "--config", config_path, "--out", out_dir,
        "--splits", "8,4,4", "--seed", "3", "--snr", "30",
        "--random-phase", "--with-matrix",
    )
    return out_dir / "manifest.json"
