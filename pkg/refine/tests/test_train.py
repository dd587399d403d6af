import json
import subprocess
import sys

import numpy as np
import pytest
import torch

from nfrefine.data import ExportedDataset, load_adjoint_matrix, load_manifest
from nfrefine.tensorio import read_tensor
from nfrefine.train import TrainSpec, load_checkpoint, train


class TestDatasets:
    def test_deep2s_dataset(self, small_dataset):
        ds = ExportedDataset(small_dataset, "train", "deep2s")
        assert len(ds) == 8
        x, t = ds[0]
        assert x.shape == (9, 9, 17) and t.shape == (9, 9, 17)
        assert x.dtype == torch.float32

    def test_measurement_dataset(self, small_dataset):
        ds = ExportedDataset(small_dataset, "val", "deepdi")
        x, t = ds[0]
        manifest = load_manifest(small_dataset)
        assert x.shape == (2 * manifest["n_measurements"],)

    def test_missing_partition(self, small_dataset):
        with pytest.raises(KeyError):
            ExportedDataset(small_dataset, "holdout", "deep2s")

    def test_adjoint_matrix_shape(self, small_dataset):
        manifest = load_manifest(small_dataset)
        ah = load_adjoint_matrix(manifest)
        assert ah.shape == (9 * 9 * 17, manifest["n_measurements"])


class TestTraining:
    def test_smoke_train_deep2s(self, small_dataset, tmp_path):
        out = tmp_path / "deep2s.pt"
        log = train("deep2s", small_dataset, TrainSpec(max_epochs=3, batch_size=4),
                    seed=0, out_path=out, base_width=2)
        assert len(log["train_loss"]) == 3
        assert all(np.isfinite(v) for v in log["train_loss"] + log["val_loss"])
        assert out.exists() and out.with_suffix(".log.json").exists()
        model, blob = load_checkpoint(out)
        assert blob["model_kind"] == "deep2s"

    def test_seeded_training_reproducible(self, small_dataset, tmp_path):
        logs = []
        for name in ("a", "b"):
            logs.append(train("deep2s", small_dataset, TrainSpec(max_epochs=2, batch_size=4),
                              seed=5, out_path=tmp_path / f"{name}.pt", base_width=2))
        assert logs[0]["train_loss"] == logs[1]["train_loss"]
        assert logs[0]["val_loss"] == logs[1]["val_loss"]

    def test_early_stopping(self, small_dataset, tmp_path):
        log = train("deep2s", small_dataset, TrainSpec(max_epochs=50, batch_size=4, patience=1,
                                                       learning_rate=10.0),  # diverges fast
                    seed=0, out_path=tmp_path / "es.pt", base_width=2)
        assert len(log["train_loss"]) < 50

    def test_deep2s_plus_warm_start(self, small_dataset, tmp_path):
        base_ckpt = tmp_path / "deep2s.pt"
        train("deep2s", small_dataset, TrainSpec(max_epochs=1, batch_size=4),
              seed=0, out_path=base_ckpt, base_width=2)
        plus_ckpt = tmp_path / "plus.pt"
        log = train("deep2s_plus", small_dataset, TrainSpec(max_epochs=1, batch_size=4),
                    seed=0, out_path=plus_ckpt, base_width=2, warm_start=base_ckpt)
        assert np.isfinite(log["val_loss"][0])
        model, blob = load_checkpoint(plus_ckpt)
        assert blob["model_kind"] == "deep2s_plus"

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            TrainSpec(batch_size=0)


class TestCli:
    def run_cli(self, *args):
        result = subprocess.run(
            [sys.executable, "-m", "nfrefine.cli"] + [str(a) for a in args],
            capture_output=True, text=True,
        )
        assert result.returncode == 0, result.stderr
        return result

    def test_train_and_infer(self, small_dataset, tmp_path):
        ckpt = tmp_path / "m.pt"
        self.run_cli("train", "--model-kind", "deep2s", "--manifest", small_dataset,
                     "--epochs", "1", "--batch-size", "4", "--base-width", "2",
                     "--seed", "1", "--out", ckpt)
        manifest = json.loads(small_dataset.read_text())
        adjoint_path = small_dataset.parent / manifest["partitions"]["test"][0]["adjoint"]
        out = tmp_path / "refined.nft"
        self.run_cli("infer", "--checkpoint", ckpt, "--input", adjoint_path, "--out", out)
        values, meta = read_tensor(out)
        assert values.shape == (9, 9, 17)
        assert values.min() >= 0.0 and values.max() <= 1.0
        assert meta["kind"] == "deep2s_reconstruction"

    def test_infer_deepdi_from_measurements(self, small_dataset, tmp_path):
        ckpt = tmp_path / "di.pt"
        self.run_cli("train", "--model-kind", "deepdi", "--manifest", small_dataset,
                     "--epochs", "1", "--batch-size", "4", "--base-width", "2",
                     "--seed", "1", "--out", ckpt)
        manifest = json.loads(small_dataset.read_text())
        meas_path = small_dataset.parent / manifest["partitions"]["test"][0]["meas"]
        out = tmp_path / "di.nft"
        self.run_cli("infer", "--checkpoint", ckpt, "--input", meas_path, "--out", out)
        values, _ = read_tensor(out)
        assert values.shape == (9, 9, 17)
