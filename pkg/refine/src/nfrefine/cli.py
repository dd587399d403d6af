"""Command line for the learned refinement stages: train and infer.

Trains on datasets exported by the imaging toolkit's `export-dataset` and
writes refined magnitude volumes back in the shared container format.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
import torch

from .models import DEFAULT_BASE_WIDTH, deep2s_infer
from .tensorio import read_tensor, write_tensor
from .train import TrainSpec, load_checkpoint, train


def cmd_train(args) -> int:
    spec = TrainSpec(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        patience=args.patience,
    )
    log = train(
        args.model_kind,
        args.manifest,
        spec,
        seed=args.seed,
        out_path=args.out,
        base_width=args.base_width,
        warm_start=args.warm_start,
    )
    print(json.dumps({"out": str(args.out), "best_epoch": log["best_epoch"],
                      "best_val_loss": log["best_val_loss"],
                      "epochs_run": len(log["train_loss"])}))
    return 0


def cmd_infer(args) -> int:
    model, blob = load_checkpoint(args.checkpoint)
    values, meta = read_tensor(args.input)
    kind = blob["model_kind"]
    if kind == "deep2s":
        out = deep2s_infer(np.asarray(values, dtype=np.float64), model)
    else:
        y = np.asarray(values).reshape(-1)
        if y.shape[0] != blob["n_measurements"]:
            raise ValueError(
                f"measurement length {y.shape[0]} != model's {blob['n_measurements']}"
            )
        y_real = torch.from_numpy(y.real.copy()).float().unsqueeze(0)
        y_imag = torch.from_numpy(y.imag.copy()).float().unsqueeze(0)
        with torch.no_grad():
            if kind == "deepdi":
                out_t = model(torch.cat([y_real, y_imag], dim=1))
            else:
                out_t = model(y_real, y_imag)
        out = out_t.squeeze(0).clamp(0.0, 1.0).numpy()
    write_tensor(args.out, out.astype(np.float32),
                 meta={"kind": f"{kind}_reconstruction", "source": str(args.input)})
    print(json.dumps({"out": str(args.out)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nfrefine", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on an exported dataset")
    p.add_argument("--model-kind", dest="model_kind", required=True,
                   choices=["deep2s", "deepdi", "deep2s_plus"])
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=15)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--base-width", dest="base_width", type=int, default=DEFAULT_BASE_WIDTH)
    p.add_argument("--warm-start", dest="warm_start", default=None,
                   help="deep2s checkpoint to initialize the U-Net of deep2s_plus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run a trained model on one input tensor")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True,
                   help="adjoint volume (deep2s) or measurement vector (deepdi/deep2s_plus)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
