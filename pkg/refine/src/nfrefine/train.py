"""Training loop: Adam, MSE on magnitudes, early stopping on validation loss.

Checkpoints carry the architecture description plus the best-validation
weights; the JSON log records per-epoch train/validation losses. Runs are
seeded and reproducible on a fixed machine/backend (CPU kernels here are
deterministic; GPU backends may reorder reductions).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn
from torch.utils.data import DataLoader

from .data import ExportedDataset, load_adjoint_matrix, load_manifest
from .models import DEFAULT_BASE_WIDTH, Deep2SPlus, make_model


@dataclass(frozen=True)
class TrainSpec:
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 15  # epochs without validation improvement before stopping

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("invalid training spec")


def _split_parts(batch_inputs, model_kind, n_measurements):
    if model_kind == "deep2s":
        return (batch_inputs,)
    if model_kind == "deepdi":
        return (batch_inputs,)
    return (batch_inputs[:, :n_measurements], batch_inputs[:, n_measurements:])


def _epoch_loss(model, loader, model_kind, n_meas, loss_fn, optimizer=None) -> float:
    training = optimizer is not None
    model.train(training)
    total, count = 0.0, 0
    with torch.set_grad_enabled(training):
        for inputs, targets in loader:
            outputs = model(*_split_parts(inputs, model_kind, n_meas))
            loss = loss_fn(outputs, targets)
            if training:
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
            total += loss.item() * len(targets)
            count += len(targets)
    return total / count


def train(
    model_kind: str,
    manifest_path,
    spec: TrainSpec,
    seed: int,
    out_path,
    base_width: int = DEFAULT_BASE_WIDTH,
    warm_start=None,
) -> dict:
    """Train one model kind on an exported dataset; returns the training log.

    deep2s_plus warm-starts its U-Net from a deep2s checkpoint (when given)
    and initializes the projection layer from the exported adjoint matrix.
    """
    torch.manual_seed(seed)
    manifest = load_manifest(manifest_path)
    for name in ("train", "val"):
        if name not in manifest["partitions"]:
            raise KeyError(f"dataset is missing the {name!r} partition")

    train_set = ExportedDataset(manifest_path, "train", model_kind)
    val_set = ExportedDataset(manifest_path, "val", model_kind)
    grid_shape = train_set.grid_shape
    n_meas = manifest["n_measurements"]

    model = make_model(model_kind, grid_shape, n_meas, base_width)
    if model_kind == "deep2s_plus":
        assert isinstance(model, Deep2SPlus)
        model.projection.init_from_adjoint(load_adjoint_matrix(manifest))
        if warm_start is not None:
            reference = torch.load(warm_start, map_location="cpu", weights_only=False)
            model.unet.load_state_dict(
                {k.removeprefix("unet."): v for k, v in reference["state_dict"].items()
                 if k.startswith("unet.")}
            )

    generator = torch.Generator().manual_seed(seed)
    train_loader = DataLoader(train_set, batch_size=spec.batch_size, shuffle=True, generator=generator)
    val_loader = DataLoader(val_set, batch_size=spec.batch_size, shuffle=False)

    optimizer = torch.optim.Adam(model.parameters(), lr=spec.learning_rate)
    loss_fn = nn.MSELoss()

    log = {"model_kind": model_kind, "seed": seed, "spec": asdict(spec),
           "train_loss": [], "val_loss": []}
    best_val = float("inf")
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    best_epoch = 0
    stale = 0
    for epoch in range(spec.max_epochs):
        train_loss = _epoch_loss(model, train_loader, model_kind, n_meas, loss_fn, optimizer)
        val_loss = _epoch_loss(model, val_loader, model_kind, n_meas, loss_fn)
        log["train_loss"].append(train_loss)
        log["val_loss"].append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= spec.patience:
                break
    log["best_epoch"] = best_epoch
    log["best_val_loss"] = best_val

    model.load_state_dict(best_state)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "model_kind": model_kind,
            "base_width": base_width,
            "grid_shape": list(grid_shape),
            "n_measurements": n_meas,
            "state_dict": model.state_dict(),
        },
        out_path,
    )
    with open(out_path.with_suffix(".log.json"), "w", encoding="utf-8") as fh:
        json.dump(log, fh, indent=2)
    return log


def load_checkpoint(path):
    blob = torch.load(path, map_location="cpu", weights_only=False)
    model = make_model(blob["model_kind"], blob["grid_shape"], blob["n_measurements"], blob["base_width"])
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, blob
