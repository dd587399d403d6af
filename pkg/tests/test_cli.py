import json

import numpy as np
import pytest

from nfmimo.cli import main
from nfmimo.geometry import reference_config, save_config
from nfmimo.tensorio import read_tensor, write_tensor
from nfmimo.geometry import AntennaArray, FrequencyGrid, ImagingConfig, VoxelGrid


@pytest.fixture
def small_setup(tmp_path):
    """Config file + one synthesized scene volume on disk."""
    arr = AntennaArray(
        tuple((float(x), 0.0, 0.0) for x in (-0.1, 0.1)),
        tuple((0.0, float(y), 0.0) for y in (-0.1, 0.0, 0.1)),
    )
    cfg = ImagingConfig(arr, FrequencyGrid(4e9, 16e9, 4), VoxelGrid(11, 11, 5, 0.02, 0.02, 0.02, (0.0, 0.0, 0.4)))
    cfg_path = tmp_path / "config.json"
    save_config(cfg, cfg_path)

    from nfmimo.synthesizer import SceneSpec, generate_scene

    rec = generate_scene(cfg.grid, SceneSpec(seed=3))
    scene_path = tmp_path / "scene.nft"
    write_tensor(scene_path, rec.volume.values, meta={"seed": 3})
    return cfg, cfg_path, scene_path, tmp_path


def run(argv):
    return main([str(a) for a in argv])


class TestSimulate:
    def test_deterministic_files(self, small_setup, capsys):
        _, cfg_path, scene_path, tmp = small_setup
        out1, out2 = tmp / "y1.nft", tmp / "y2.nft"
        for out in (out1, out2):
            code = run(["simulate", "--config", cfg_path, "--scene", scene_path,
                        "--snr", "30", "--seed", "7", "--out", out])
            assert code == 0
        assert out1.read_bytes() == out2.read_bytes()
        values, meta = read_tensor(out1)
        assert meta["seed"] == 7 and meta["snr_db"] == 30
        assert "config_hash" in meta

    def test_inf_snr(self, small_setup):
        cfg, cfg_path, scene_path, tmp = small_setup
        out = tmp / "clean.nft"
        assert run(["simulate", "--config", cfg_path, "--scene", scene_path,
                    "--snr", "inf", "--seed", "0", "--out", out]) == 0
        values, meta = read_tensor(out)
        from nfmimo.forward_model import ReflectivityVolume, apply_forward

        scene, _ = read_tensor(scene_path)
        expected = apply_forward(cfg, ReflectivityVolume(scene, cfg.grid)).values
        assert np.array_equal(values, expected)


class TestReconCommands:
    @pytest.fixture
    def measurement(self, small_setup):
        cfg, cfg_path, scene_path, tmp = small_setup
        meas = tmp / "y.nft"
        run(["simulate", "--config", cfg_path, "--scene", scene_path,
             "--snr", "30", "--seed", "1", "--out", meas])
        return cfg, cfg_path, scene_path, meas, tmp

    def test_adjoint(self, measurement):
        cfg, cfg_path, _, meas, tmp = measurement
        out = tmp / "adj.nft"
        assert run(["adjoint", "--config", cfg_path, "--meas", meas, "--out", out]) == 0
        values, meta = read_tensor(out)
        assert values.shape == cfg.grid.shape
        assert values.max() == pytest.approx(1.0)
        assert meta["norm_scale"] > 0

    def test_bp_normalized_and_plot(self, measurement):
        cfg, cfg_path, _, meas, tmp = measurement
        out = tmp / "bp.nft"
        assert run(["bp", "--config", cfg_path, "--meas", meas, "--out", out,
                    "--normalize", "--plot"]) == 0
        values, _ = read_tensor(out)
        assert values.dtype == np.float64
        assert values.max() == pytest.approx(1.0)
        assert (tmp / "bp.png").exists()

    def test_tv_writes_trace(self, measurement):
        cfg, cfg_path, _, meas, tmp = measurement
        out = tmp / "tv.nft"
        assert run(["tv", "--config", cfg_path, "--meas", meas, "--out", out,
                    "--lambda", "5", "--outer", "3", "--cg-iters", "10", "--no-plot"]) == 0
        trace = json.loads((tmp / "tv.trace.json").read_text())
        assert len(trace["objective_trace"]) >= 2
        values, meta = read_tensor(out)
        assert values.shape == cfg.grid.shape
        assert meta["lambda"] == 5

    def test_metrics_json(self, measurement, capsys):
        cfg, cfg_path, scene_path, meas, tmp = measurement
        adj = tmp / "adj.nft"
        run(["adjoint", "--config", cfg_path, "--meas", meas, "--out", adj])
        capsys.readouterr()
        truth_mag = tmp / "truth_mag.nft"
        scene, _ = read_tensor(scene_path)
        write_tensor(truth_mag, np.abs(scene))
        assert run(["metrics", "--recon", adj, "--truth", truth_mag]) == 0
        report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert set(report) == {"psnr_db", "ssim"}
        assert np.isfinite(report["psnr_db"])


class TestCondnum:
    def test_csv_and_figure(self, tmp_path, capsys):
        cfg_path = tmp_path / "ref.json"
        save_config(reference_config(7), cfg_path)
        out = tmp_path / "kappa.csv"
        assert run(["condnum", "--config", cfg_path, "--targets", "2",
                    "--orientation", "xy", "--sep-cm", "2:6:2", "--out", out]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "separation_cm,snapped_cm,kappa"
        assert len(lines) == 4
        assert (tmp_path / "kappa.png").exists()


class TestExportDataset:
    def test_partitions_and_matrix(self, small_setup):
        cfg, cfg_path, _, tmp = small_setup[0], small_setup[1], small_setup[2], small_setup[3]
        out_dir = tmp / "dataset"
        assert run(["export-dataset", "--config", cfg_path, "--out", out_dir,
                    "--splits", "3,2,2", "--seed", "5", "--snr", "30", "--with-matrix"]) == 0
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert {k: len(v) for k, v in manifest["partitions"].items()} == {"train": 3, "val": 2, "test": 2}
        entry = manifest["partitions"]["train"][0]
        truth, meta_t = read_tensor(out_dir / entry["truth"])
        adjoint, _ = read_tensor(out_dir / entry["adjoint"])
        meas, _ = read_tensor(out_dir / entry["meas"])
        assert truth.dtype == np.float32 and adjoint.dtype == np.float32
        assert meas.dtype == np.complex64
        assert truth.shape == cfg.grid.shape and meas.shape == (cfg.n_measurements,)
        matrix, _ = read_tensor(out_dir / manifest["system_matrix"])
        assert matrix.shape == (cfg.n_measurements, cfg.n_voxels)
        assert (out_dir / manifest["config"]).exists()

    def test_export_deterministic(self, small_setup):
        _, cfg_path, _, tmp = small_setup
        a_dir, b_dir = tmp / "a", tmp / "b"
        for d in (a_dir, b_dir):
            run(["export-dataset", "--config", cfg_path, "--out", d,
                 "--splits", "2,1,1", "--seed", "9", "--snr", "20"])
        for name in sorted(p.name for p in a_dir.glob("*.nft")):
            assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes()


class TestBench:
    def test_bench_json(self, small_setup, capsys):
        _, cfg_path, _, tmp = small_setup
        out = tmp / "bench.json"
        assert run(["bench", "--config", cfg_path, "--n-scenes", "3",
                    "--methods", "adjoint,bp", "--out", out, "--no-plot"]) == 0
        report = json.loads(out.read_text())
        assert set(report["methods"]) == {"adjoint", "bp"}
        assert report["methods"]["adjoint"]["mean_s"] > 0


class TestRender:
    def test_render_volume(self, small_setup):
        _, cfg_path, scene_path, tmp = small_setup
        out = tmp / "scene.png"
        assert run(["render", scene_path, out]) == 0
        assert out.exists() and out.stat().st_size > 0


class TestErrors:
    def test_missing_file_exit_4(self, tmp_path, capsys):
        code = run(["render", tmp_path / "nope.nft", tmp_path / "o.png"])
        assert code == 4
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] in ("io_error", "format_error")

    def test_bad_tensor_exit_4(self, tmp_path, capsys):
        bad = tmp_path / "bad.nft"
        bad.write_bytes(b"garbage!")
        assert run(["render", bad, tmp_path / "o.png"]) == 4

    def test_shape_mismatch_exit_2(self, small_setup, tmp_path, capsys):
        _, cfg_path, _, tmp = small_setup
        wrong = tmp_path / "wrong.nft"
        write_tensor(wrong, np.zeros((2, 2, 2), dtype=np.complex128))
        code = run(["simulate", "--config", cfg_path, "--scene", wrong,
                    "--snr", "30", "--seed", "0", "--out", tmp_path / "y.nft"])
        assert code == 2
        assert json.loads(capsys.readouterr().err.strip())["error"] == "usage_error"

    def test_params_file_supplies_flags(self, small_setup, tmp_path):
        cfg, cfg_path, scene_path, tmp = small_setup
        params = tmp_path / "params.json"
        params.write_text(json.dumps({
            "config": str(cfg_path), "scene": str(scene_path),
            "snr": "inf", "seed": 4, "out": str(tmp_path / "y.nft"),
        }))
        assert run(["simulate", "--params", params]) == 0
        assert (tmp_path / "y.nft").exists()

    def test_flags_override_params(self, small_setup, tmp_path):
        cfg, cfg_path, scene_path, tmp = small_setup
        params = tmp_path / "params.json"
        params.write_text(json.dumps({
            "config": str(cfg_path), "scene": str(scene_path),
            "snr": "inf", "seed": 4, "out": str(tmp_path / "a.nft"),
        }))
        assert run(["simulate", "--params", params, "--out", tmp_path / "b.nft"]) == 0
        assert (tmp_path / "b.nft").exists() and not (tmp_path / "a.nft").exists()
