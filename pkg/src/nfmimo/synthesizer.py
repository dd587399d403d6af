"""Randomized extended-target scenes, dataset export, and test scenes.

A scene is drawn in a fixed order from its own seeded stream: target center
(uniform in the metric ranges, snapped to a voxel), 5 virtual centers
(Gaussian, sigma = 2 voxels), 3 points per virtual center (Gaussian,
sigma = 1.5 voxels) for 15 unit impulses total, separable Gaussian smoothing
(sigma = 1.3 voxels, radius ceil(4*sigma), replicate boundary), then a
monotone sigmoid-shaped amplitude map onto [0, 1]. Dataset scenes use
per-index sub-seeds, so the content is a pure function of
(grid, n_scenes, base_seed, random_phase) regardless of worker count.

All Gaussian draw widths are in voxels, not meters.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .forward_model import ReflectivityVolume
from .geometry import VoxelGrid, _round_half_up
from .rng import mix_seed, normals, stream_rng

SIGMOID_GAIN = 10.0


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    center_range_x: tuple[float, float] = (-0.05, 0.05)
    center_range_y: tuple[float, float] = (-0.05, 0.05)
    center_range_z: tuple[float, float] = (0.41, 0.59)
    n_virtual_centers: int = 5
    points_per_center: int = 3
    virtual_center_std: float = 2.0  # voxels
    point_std: float = 1.5  # voxels
    filter_std: float = 1.3  # voxels
    random_phase: bool = False

    def __post_init__(self):
        if min(self.virtual_center_std, self.point_std, self.filter_std) <= 0:
            raise ValueError("all standard deviations must be positive")


@dataclass
class SceneRecord:
    """Ground truth volume plus how it was generated."""

    volume: ReflectivityVolume
    seed: int
    spec: SceneSpec | None
    impulse_voxels: np.ndarray | None = None  # (15, 3) pre-filter impulse sites
    phases: np.ndarray | None = None  # flat uniform [-pi, pi) draws when random_phase
    magnitude_values: np.ndarray | None = None  # exact magnitudes from the generator

    def magnitude(self) -> np.ndarray:
        # the stored field avoids the 1-ulp round trip through |mag * e^(i phi)|
        if self.magnitude_values is not None:
            return self.magnitude_values
        return self.volume.magnitude()


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(4.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def _smooth(vol: np.ndarray, sigma: float) -> np.ndarray:
    kernel = _gaussian_kernel(sigma)
    out = vol
    for axis in range(3):
        out = correlate1d(out, kernel, axis=axis, mode="nearest")
    return out


def _amplitude_map(vol: np.ndarray) -> np.ndarray:
    """Monotone sigmoid-shaped map: 0 -> 0, max -> 1, saturating in between."""
    peak = vol.max()
    v = vol / peak
    def sig(t):
        return 1.0 / (1.0 + np.exp(-SIGMOID_GAIN * (t - 0.5)))
    lo, hi = sig(0.0), sig(1.0)
    return (sig(v) - lo) / (hi - lo)


def generate_scene(grid: VoxelGrid, spec: SceneSpec) -> SceneRecord:
    """One randomized extended target; bit-identical for equal (grid, spec)."""
    gen = stream_rng(spec.seed, 0)

    u = gen.random(3)
    ranges = (spec.center_range_x, spec.center_range_y, spec.center_range_z)
    center_m = [lo + (hi - lo) * ui for (lo, hi), ui in zip(ranges, u)]
    center_idx = np.array(grid.snap(center_m, clip=True))

    n_vc = spec.n_virtual_centers
    n_pts = spec.points_per_center
    vc_offsets = normals(gen, n_vc * 3).reshape(n_vc, 3) * spec.virtual_center_std
    vcs = _round_half_up(center_idx[None, :] + vc_offsets)
    vcs = np.clip(vcs, 0, np.array(grid.shape) - 1)

    pt_offsets = normals(gen, n_vc * n_pts * 3).reshape(n_vc, n_pts, 3) * spec.point_std
    pts = _round_half_up(vcs[:, None, :] + pt_offsets)
    pts = np.clip(pts, 0, np.array(grid.shape) - 1).reshape(-1, 3)

    impulses = np.zeros(grid.shape, dtype=np.float64)
    np.add.at(impulses, (pts[:, 0], pts[:, 1], pts[:, 2]), 1.0)

    magnitude = _amplitude_map(_smooth(impulses, spec.filter_std))

    phases = None
    if spec.random_phase:
        phases = (2.0 * gen.random(grid.n_voxels) - 1.0) * np.pi
        values = magnitude * np.exp(1j * phases.reshape(grid.shape))
    else:
        values = magnitude.astype(np.complex128)

    return SceneRecord(
        volume=ReflectivityVolume(values, grid),
        seed=spec.seed,
        spec=spec,
        impulse_voxels=pts,
        phases=phases,
        magnitude_values=magnitude,
    )


def scene_filename(index: int) -> str:
    return f"scene_{index:05d}.nft"


def generate_dataset(
    grid: VoxelGrid,
    n_scenes: int,
    base_seed: int,
    random_phase: bool,
    out_dir=None,
    n_jobs: int = 1,
) -> dict:
    """Generate n_scenes records; optionally write volumes + manifest.

    Scene i uses sub-seed mix(base_seed, i), so the manifest and volumes do
    not depend on n_jobs. Returns the manifest dict; when out_dir is given,
    volumes are written as tensor containers and the manifest as
    manifest.json, with a 'records' key holding the in-memory SceneRecords.
    """
    if n_scenes < 1:
        raise ValueError("n_scenes must be at least 1")

    def make(i: int) -> SceneRecord:
        return generate_scene(grid, SceneSpec(seed=mix_seed(base_seed, i), random_phase=random_phase))

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(make, range(n_scenes)))
    else:
        records = [make(i) for i in range(n_scenes)]

    manifest = {
        "scenes": [
            {"path": scene_filename(i), "seed": rec.seed, "random_phase": random_phase}
            for i, rec in enumerate(records)
        ],
        "grid": {
            "nx": grid.nx, "ny": grid.ny, "nz": grid.nz,
            "dx_m": grid.dx_m, "dy_m": grid.dy_m, "dz_m": grid.dz_m,
            "center_m": list(grid.center_m),
        },
        "base_seed": base_seed,
    }

    if out_dir is not None:
        from .tensorio import write_tensor

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, rec in enumerate(records):
            write_tensor(
                out_dir / scene_filename(i),
                rec.volume.values,
                meta={"seed": rec.seed, "random_phase": random_phase, "kind": "ground_truth"},
            )
        with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)

    manifest["records"] = records
    return manifest


def ellipsoid_scene(grid: VoxelGrid, semi_axes, center) -> SceneRecord:
    """Solid ellipsoid: magnitude 1 inside, 0 outside."""
    semi_axes = np.asarray(semi_axes, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if np.any(semi_axes <= 0):
        raise ValueError("semi-axes must be positive")
    for axis in range(3):
        coords = grid.axis_coords(axis)
        lo, hi = coords[0] - grid.pitch[axis] / 2, coords[-1] + grid.pitch[axis] / 2
        if center[axis] - semi_axes[axis] < lo or center[axis] + semi_axes[axis] > hi:
            raise ValueError("ellipsoid extends outside the voxel grid")
    rel = (grid.voxel_centers - center[None, :]) / semi_axes[None, :]
    inside = np.sum(rel**2, axis=1) <= 1.0
    values = inside.astype(np.complex128).reshape(grid.shape)
    return SceneRecord(volume=ReflectivityVolume(values, grid), seed=0, spec=None)


def point_target_scene(grid: VoxelGrid, positions, amplitudes=None) -> SceneRecord:
    """Unit (or given-amplitude) impulses at the voxels nearest the positions.

    Positions snapping to the same voxel accumulate their amplitudes.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    if amplitudes is None:
        amplitudes = np.ones(len(positions))
    amplitudes = np.asarray(amplitudes, dtype=np.complex128)
    if len(amplitudes) != len(positions):
        raise ValueError("one amplitude per position required")
    values = np.zeros(grid.shape, dtype=np.complex128)
    for pos, amp in zip(positions, amplitudes):
        ix, iy, iz = grid.snap(pos)
        values[ix, iy, iz] += amp
    return SceneRecord(volume=ReflectivityVolume(values, grid), seed=0, spec=None)
