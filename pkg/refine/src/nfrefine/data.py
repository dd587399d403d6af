"""Dataset manifest loading for exported training data.

The imaging toolkit's export writes a manifest.json with train/val/test
partitions; each entry names a truth-magnitude volume, the raw measurement
vector, and the precomputed normalized adjoint volume. Everything is read
through the shared container format.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import Dataset

from .tensorio import read_tensor


class ExportedDataset(Dataset):
    """One partition of an exported dataset, loaded eagerly.

    model_kind selects the network input: the adjoint volume for deep2s, the
    concatenated (Re y, Im y) vector for deepdi, and the (Re y, Im y) pair
    for deep2s_plus. Targets are always the truth magnitudes.
    """

    def __init__(self, manifest_path, partition: str, model_kind: str):
        manifest_path = Path(manifest_path)
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        if partition not in manifest["partitions"]:
            raise KeyError(f"manifest has no partition {partition!r}")
        self.model_kind = model_kind
        self.grid_shape = (manifest["grid"]["nx"], manifest["grid"]["ny"], manifest["grid"]["nz"])
        self.n_measurements = manifest.get("n_measurements")
        base = manifest_path.parent

        inputs, targets = [], []
        for entry in manifest["partitions"][partition]:
            truth, _ = read_tensor(base / entry["truth"])
            targets.append(torch.from_numpy(truth.astype(np.float32)))
            if model_kind == "deep2s":
                adjoint, _ = read_tensor(base / entry["adjoint"])
                inputs.append(torch.from_numpy(adjoint.astype(np.float32)))
            else:
                meas, _ = read_tensor(base / entry["meas"])
                parts = np.concatenate([meas.real, meas.imag]).astype(np.float32)
                inputs.append(torch.from_numpy(parts))
        if not inputs:
            raise ValueError(f"partition {partition!r} is empty")
        self.inputs = torch.stack(inputs)
        self.targets = torch.stack(targets)

    def __len__(self) -> int:
        return len(self.inputs)

    def __getitem__(self, idx):
        return self.inputs[idx], self.targets[idx]


def load_manifest(manifest_path) -> dict:
    manifest_path = Path(manifest_path)
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    manifest["_base_dir"] = str(manifest_path.parent)
    return manifest


def load_adjoint_matrix(manifest: dict) -> np.ndarray:
    """N x M adjoint matrix A^H from the exported system matrix."""
    if "system_matrix" not in manifest:
        raise KeyError("manifest has no exported system matrix; re-export with --with-matrix")
    path = Path(manifest["_base_dir"]) / manifest["system_matrix"]
    a, _ = read_tensor(path)
    return np.conj(a).T
