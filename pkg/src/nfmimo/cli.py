"""Batch pipeline driver: synthesize, simulate, reconstruct, evaluate, analyze.

Every flag has a JSON equivalent: pass --params file.json and any key matching
a flag name (dashes as underscores) supplies its value; explicit flags win.
Outputs embed the config hash and seed in their container metadata, so a
re-run with identical flags reproduces them bit-exactly.

Exit codes: 0 success, 2 usage/argument error, 3 numerical failure, 4 I/O or
format error. Failures print a one-line JSON error object to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, figures, metrics, recon_direct, recon_tv, synthesizer, tensorio
from .forward_model import (
    MeasurementVector,
    NoiseSpec,
    ReflectivityVolume,
    add_noise,
    apply_forward,
    build_matrix,
)
from .geometry import ArrayFormatError, ImagingConfig, VoxelGrid, config_hash, load_config
from .recon_tv import NumericalFailureError, TvParams
from .rng import mix_seed

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _grid_meta(grid: VoxelGrid) -> dict:
    return {
        "nx": grid.nx, "ny": grid.ny, "nz": grid.nz,
        "dx_m": grid.dx_m, "dy_m": grid.dy_m, "dz_m": grid.dz_m,
        "center_m": list(grid.center_m),
    }


def _load_params(path) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ArrayFormatError(f"{path}: params file must hold a JSON object")
    return data


def _resolve(args, params: dict, name: str, default=None):
    value = getattr(args, name)
    if value is not None:
        return value
    return params.get(name, default)


def _read_volume(path, grid: VoxelGrid | None = None):
    values, meta = tensorio.read_tensor(path)
    if grid is not None and tuple(values.shape) != grid.shape:
        raise ValueError(f"{path}: volume shape {values.shape} does not match grid {grid.shape}")
    return values, meta


def _parse_snr(text) -> float:
    return float(text)  # accepts the literal 'inf' to disable noise


def _parse_span(text: str) -> list[float]:
    """'a:b:s' inclusive range in cm, or a comma list of values."""
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) == 2:
            parts.append(1.0)
        a, b, step = parts
        n = int(np.floor((b - a) / step + 0.5)) + 1
        return [a + i * step for i in range(n)]
    return [float(p) for p in text.split(",")]


def cmd_synth(args) -> int:
    params = _load_params(args.params)
    config = load_config(_resolve(args, params, "config"))
    out_dir = Path(_resolve(args, params, "out"))
    n_scenes = int(_resolve(args, params, "n_scenes", 1))
    seed = int(_resolve(args, params, "seed", 0))
    random_phase = bool(_resolve(args, params, "random_phase", False))
    synthesizer.generate_dataset(config.grid, n_scenes, seed, random_phase, out_dir=out_dir)
    print(json.dumps({"out": str(out_dir), "n_scenes": n_scenes, "base_seed": seed}))
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = _load_params(args.params)
    config = load_config(_resolve(args, params, "config"))
    scene_values, _ = _read_volume(_resolve(args, params, "scene"), config.grid)
    snr_db = _parse_snr(_resolve(args, params, "snr", "inf"))
    seed = int(_resolve(args, params, "seed", 0))
    scene = ReflectivityVolume(scene_values, config.grid)
    y = apply_forward(config, scene)
    y = add_noise(y, NoiseSpec(snr_db=snr_db, seed=seed), scene, config)
    out = Path(_resolve(args, params, "out"))
    tensorio.write_tensor(
        out,
        y.values,
        meta={
            "kind": "measurement",
            "config_hash": config_hash(config),
            "snr_db": snr_db,
            "seed": seed,
        },
    )
    print(json.dumps({"out": str(out), "m": int(y.values.shape[0])}))
    return EXIT_OK


def _load_measurement(path, config: ImagingConfig) -> tuple[MeasurementVector, dict]:
    values, meta = tensorio.read_tensor(path)
    source = {k: meta[k] for k in ("seed", "snr_db") if k in meta}
    return MeasurementVector(values, config), source


def cmd_adjoint(args) -> int:
    params = _load_params(args.params)
    config = load_config(_resolve(args, params, "config"))
    y, source = _load_measurement(_resolve(args, params, "meas"), config)
    image = recon_direct.adjoint_image(config, y)
    out = Path(_resolve(args, params, "out"))
    tensorio.write_tensor(
        out,
        image.values,
        meta={
            "kind": "adjoint_image",
            "config_hash": config_hash(config),
            "norm_scale": image.scale,
            "grid": _grid_meta(config.grid),
            **source,
        },
    )
    if args.plot:
        figures.volume_projections(image.values, config.grid, out.with_suffix(".png"), "adjoint image")
    print(json.dumps({"out": str(out), "norm_scale": image.scale}))
    return EXIT_OK


def cmd_bp(args) -> int:
    params = _load_params(args.params)
    config = load_config(_resolve(args, params, "config"))
    y, source = _load_measurement(_resolve(args, params, "meas"), config)
    vol = recon_direct.backprojection(config, y)
    out = Path(_resolve(args, params, "out"))
    meta = {"kind": "backprojection", "config_hash": config_hash(config),
            "grid": _grid_meta(config.grid), **source}
    if args.normalize:
        mag = vol.magnitude()
        peak = mag.max()
        if peak == 0:
            raise ValueError("cannot normalize an all-zero backprojection")
        meta["norm_scale"] = float(peak)
        tensorio.write_tensor(out, mag / peak, meta=meta)
    else:
        tensorio.write_tensor(out, vol.values, meta=meta)
    if args.plot:
        figures.volume_projections(vol.magnitude(), config.grid, out.with_suffix(".png"), "backprojection")
    print(json.dumps({"out": str(out)}))
    return EXIT_OK


def cmd_tv(args) -> int:
    params = _load_params(args.params)
    config = load_config(_resolve(args, params, "config"))
    y, source = _load_measurement(_resolve(args, params, "meas"), config)
    tv_params = TvParams(
        lam=float(_resolve(args, params, "lam", 25.0)),
        eps=(None if _resolve(args, params, "eps") is None else float(_resolve(args, params, "eps"))),
        outer_iters=int(_resolve(args, params, "outer", 20)),
        cg_iters=int(_resolve(args, params, "cg_iters", 50)),
        cg_tol=float(_resolve(args, params, "cg_tol", 1e-6)),
    )
    result = recon_tv.tv_solve(config, y, tv_params)
    out = Path(_resolve(args, params, "out"))
    tensorio.write_tensor(
        out,
        result.volume.values,
        meta={
            "kind": "tv_reconstruction",
            "config_hash": config_hash(config),
            "lambda": tv_params.lam,
            "eps": result.eps,
            "grid": _grid_meta(config.grid),
            **source,
        },
    )
    trace_path = out.parent / (out.stem + ".trace.json")
    with open(trace_path, "w", encoding="utf-8") as fh:
        json.dump({"objective_trace": result.objective_trace, "eps": result.eps}, fh, indent=2)
    if args.plot:
        figures.trace_plot(result.objective_trace, out.parent / (out.stem + ".trace.png"))
        figures.volume_projections(
            result.volume.magnitude(), config.grid, out.with_suffix(".png"), "TV reconstruction"
        )
    print(json.dumps({"out": str(out), "trace": str(trace_path), "final_objective": result.objective_trace[-1]}))
    return EXIT_OK


def cmd_metrics(args) -> int:
    params = _load_params(args.params)
    recon, _ = tensorio.read_tensor(_resolve(args, params, "recon"))
    truth, _ = tensorio.read_tensor(_resolve(args, params, "truth"))
    report = {
        "psnr_db": metrics.psnr3d(truth, recon),
        "ssim": metrics.ssim_slice_avg(truth, recon),
    }
    text = json.dumps(report)
    out = _resolve(args, params, "out")
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_condnum(args) -> int:
    params = _load_params(args.params)
    config = load_config(_resolve(args, params, "config"))
    n_targets = int(_resolve(args, params, "targets", 2))
    orientation = _resolve(args, params, "orientation", "xy")
    span_cm = _parse_span(_resolve(args, params, "sep_cm", "1:20:1"))
    table = analysis.condition_sweep(config, n_targets, [s / 100.0 for s in span_cm], orientation)
    out = Path(_resolve(args, params, "out"))
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("separation_cm,snapped_cm,kappa\n")
        for row in table.rows:
            fh.write(f"{row.separation_m * 100:.6g},{row.snapped_separation_m * 100:.6g},{row.kappa:.9e}\n")
    if args.plot:
        figures.condition_plot([table], out.with_suffix(".png"))
    print(json.dumps({"out": str(out), "rows": len(table.rows), "config_hash": table.config_hash}))
    return EXIT_OK


def cmd_export_dataset(args) -> int:
    params = _load_params(args.params)
    config = load_config(_resolve(args, params, "config"))
    out_dir = Path(_resolve(args, params, "out"))
    splits_text = _resolve(args, params, "splits", "800,100,100")
    split_sizes = [int(s) for s in str(splits_text).split(",")]
    if len(split_sizes) != 3:
        raise ValueError("--splits needs three comma-separated counts (train,val,test)")
    seed = int(_resolve(args, params, "seed", 0))
    snr_db = _parse_snr(_resolve(args, params, "snr", "30"))
    random_phase = bool(_resolve(args, params, "random_phase", False))

    out_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(config)
    base_meta = {"config_hash": chash, "snr_db": snr_db}

    from .geometry import save_config

    save_config(config, out_dir / "config.json")

    names = ("train", "val", "test")
    partitions = {name: [] for name in names}
    index = 0
    for name, count in zip(names, split_sizes):
        for _ in range(count):
            scene_seed = mix_seed(seed, index)
            rec = synthesizer.generate_scene(
                config.grid, synthesizer.SceneSpec(seed=scene_seed, random_phase=random_phase)
            )
            y = apply_forward(config, rec.volume)
            y = add_noise(y, NoiseSpec(snr_db=snr_db, seed=scene_seed), rec.volume, config)
            image = recon_direct.adjoint_image(config, y)

            stem = f"{name}_{index:05d}"
            truth_path = f"{stem}_truth.nft"
            meas_path = f"{stem}_meas.nft"
            adjoint_path = f"{stem}_adjoint.nft"
            tensorio.write_tensor(
                out_dir / truth_path,
                rec.magnitude().astype(np.float32),
                meta={**base_meta, "kind": "truth_magnitude", "seed": scene_seed},
            )
            tensorio.write_tensor(
                out_dir / meas_path,
                y.values.astype(np.complex64),
                meta={**base_meta, "kind": "measurement", "seed": scene_seed},
            )
            tensorio.write_tensor(
                out_dir / adjoint_path,
                image.values.astype(np.float32),
                meta={**base_meta, "kind": "adjoint_image", "seed": scene_seed,
                      "norm_scale": image.scale},
            )
            partitions[name].append(
                {"truth": truth_path, "meas": meas_path, "adjoint": adjoint_path, "seed": scene_seed}
            )
            index += 1

    manifest = {
        "partitions": partitions,
        "grid": _grid_meta(config.grid),
        "config": "config.json",
        "config_hash": chash,
        "base_seed": seed,
        "snr_db": snr_db,
        "random_phase": random_phase,
        "n_measurements": config.n_measurements,
    }
    if args.with_matrix:
        matrix = build_matrix(config)
        tensorio.write_tensor(
            out_dir / "system_matrix.nft",
            matrix.entries.astype(np.complex64),
            meta={**base_meta, "kind": "system_matrix"},
        )
        manifest["system_matrix"] = "system_matrix.nft"
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    print(json.dumps({"out": str(out_dir), "splits": split_sizes}))
    return EXIT_OK


def cmd_bench(args) -> int:
    params = _load_params(args.params)
    config = load_config(_resolve(args, params, "config"))
    n_scenes = int(_resolve(args, params, "n_scenes", 100))
    seed = int(_resolve(args, params, "seed", 0))
    snr_db = _parse_snr(_resolve(args, params, "snr", "30"))
    methods = str(_resolve(args, params, "methods", "adjoint,bp")).split(",")

    measurements = []
    for i in range(n_scenes):
        scene_seed = mix_seed(seed, i)
        rec = synthesizer.generate_scene(config.grid, synthesizer.SceneSpec(seed=scene_seed))
        y = apply_forward(config, rec.volume)
        y = add_noise(y, NoiseSpec(snr_db=snr_db, seed=scene_seed), rec.volume, config)
        measurements.append(y)

    def run(method: str, y: MeasurementVector):
        if method == "adjoint":
            recon_direct.adjoint_image(config, y)
        elif method == "bp":
            recon_direct.backprojection(config, y)
        elif method == "tv":
            recon_tv.tv_solve(config, y, TvParams())
        else:
            raise ValueError(f"unknown bench method {method!r}")

    t0 = time.perf_counter()
    run("adjoint", measurements[0])  # builds and caches the operator factors
    setup_s = time.perf_counter() - t0

    results = {}
    for method in methods:
        times = []
        for y in measurements:
            t0 = time.perf_counter()
            run(method, y)
            times.append(time.perf_counter() - t0)
        times = np.asarray(times)
        results[method] = {
            "mean_s": float(times.mean()),
            "std_s": float(times.std()),
            "min_s": float(times.min()),
            "max_s": float(times.max()),
            "n_scenes": n_scenes,
        }
    report = {"methods": results, "operator_setup_s": setup_s, "config_hash": config_hash(config)}
    out = Path(_resolve(args, params, "out"))
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    if args.plot:
        figures.bench_plot(results, out.with_suffix(".png"))
    print(json.dumps(report))
    return EXIT_OK


def cmd_render(args) -> int:
    values, meta = tensorio.read_tensor(args.volume)
    grid_meta = meta.get("grid")
    if grid_meta:
        grid = VoxelGrid(
            nx=grid_meta["nx"], ny=grid_meta["ny"], nz=grid_meta["nz"],
            dx_m=grid_meta["dx_m"], dy_m=grid_meta["dy_m"], dz_m=grid_meta["dz_m"],
            center_m=tuple(grid_meta["center_m"]),
        )
    else:
        nx, ny, nz = values.shape
        grid = VoxelGrid(nx, ny, nz, 1.0, 1.0, 1.0)
    figures.volume_projections(values, grid, args.out, meta.get("kind"))
    print(json.dumps({"out": str(args.out)}))
    return EXIT_OK


def _add_common(sub, plot_default=True):
    sub.add_argument("--params", default=None, help="JSON file with flag defaults")
    if plot_default is not None:
        sub.add_argument(
            "--plot", action=argparse.BooleanOptionalAction, default=plot_default,
            help="render a matplotlib figure next to the output",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nfmimo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a randomized extended-target dataset")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--n-scenes", dest="n_scenes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--random-phase", dest="random_phase", action=argparse.BooleanOptionalAction, default=None)
    _add_common(p, plot_default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simulate", help="simulate noisy measurements for a scene volume")
    p.add_argument("--config")
    p.add_argument("--scene")
    p.add_argument("--snr", help="SNR in dB; 'inf' disables noise")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    _add_common(p, plot_default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("adjoint", help="normalized adjoint image |A^H y| / max")
    p.add_argument("--config")
    p.add_argument("--meas")
    p.add_argument("--out")
    _add_common(p, plot_default=False)
    p.set_defaults(func=cmd_adjoint)

    p = sub.add_parser("bp", help="frequency-domain backprojection")
    p.add_argument("--config")
    p.add_argument("--meas")
    p.add_argument("--out")
    p.add_argument("--normalize", action="store_true", help="write |bp| / max instead of the complex volume")
    _add_common(p, plot_default=False)
    p.set_defaults(func=cmd_bp)

    p = sub.add_parser("tv", help="TV-regularized least-squares reconstruction")
    p.add_argument("--config")
    p.add_argument("--meas")
    p.add_argument("--out")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--outer", type=int)
    p.add_argument("--cg-iters", dest="cg_iters", type=int)
    p.add_argument("--cg-tol", dest="cg_tol", type=float)
    _add_common(p, plot_default=True)
    p.set_defaults(func=cmd_tv)

    p = sub.add_parser("metrics", help="PSNR/SSIM between a reconstruction and ground truth")
    p.add_argument("--recon")
    p.add_argument("--truth")
    p.add_argument("--out")
    p.add_argument("--params", default=None, help="JSON file with flag defaults")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("condnum", help="condition-number sweep of point-target submatrices")
    p.add_argument("--config")
    p.add_argument("--targets", type=int)
    p.add_argument("--orientation", choices=["xy", "z"])
    p.add_argument("--sep-cm", dest="sep_cm", help="sweep as a:b:step (cm) or a comma list")
    p.add_argument("--out")
    _add_common(p, plot_default=True)
    p.set_defaults(func=cmd_condnum)

    p = sub.add_parser("export-dataset", help="paired (adjoint, truth, measurement) training tensors")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--splits", help="train,val,test counts (default 800,100,100)")
    p.add_argument("--seed", type=int)
    p.add_argument("--snr")
    p.add_argument("--random-phase", dest="random_phase", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--with-matrix", dest="with_matrix", action="store_true",
                   help="also export the dense system matrix (c64)")
    _add_common(p, plot_default=None)
    p.set_defaults(func=cmd_export_dataset)

    p = sub.add_parser("bench", help="wall-clock timing per reconstruction method")
    p.add_argument("--config")
    p.add_argument("--n-scenes", dest="n_scenes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--snr")
    p.add_argument("--methods", help="comma list from adjoint,bp,tv")
    p.add_argument("--out")
    _add_common(p, plot_default=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("render", help="max-projection views of a volume file")
    p.add_argument("volume")
    p.add_argument("out")
    p.set_defaults(func=cmd_render)

    return parser


def _fail(kind: str, exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc)}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalFailureError as exc:
        return _fail("numerical_failure", exc, EXIT_NUMERICAL)
    except (tensorio.TensorFormatError, ArrayFormatError) as exc:
        return _fail("format_error", exc, EXIT_IO)
    except OSError as exc:
        return _fail("io_error", exc, EXIT_IO)
    except (ValueError, IndexError, KeyError, TypeError) as exc:
        return _fail("usage_error", exc, EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())
