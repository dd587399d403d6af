"""Conditioning-based resolution analysis for point-target constellations.

The resolvability proxy is the condition number of the M x k column
submatrix of the observation matrix picked out by the target voxels.
Constellations are symmetric about the grid center: cross-range ("xy")
targets sit at corners of an axis-aligned square of side = separation on the
center range slice (2 targets use two opposite corners, 4 targets all four,
so the 2-target columns are a subset of the 4-target ones); range ("z")
targets are spaced along the central axis. Metric positions are snapped to
the voxel grid with half-up rounding and the realized separation is reported
per row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward_model import extract_columns
from .geometry import ImagingConfig, VoxelGrid, config_hash
from .synthesizer import SceneRecord, point_target_scene

KAPPA_CAP = 1e18

XY_RESOLUTION_SEPARATIONS_M = (0.0250, 0.0375, 0.0500, 0.0625)
Z_RESOLUTION_SEPARATIONS_M = (0.01250, 0.01875, 0.02500, 0.03125)


@dataclass(frozen=True)
class ConstellationSpec:
    n_targets: int
    separation_m: float
    orientation: str  # "xy" (cross-range) or "z" (range)

    def __post_init__(self):
        if self.n_targets not in (2, 4):
            raise ValueError("n_targets must be 2 or 4")
        if self.orientation not in ("xy", "z"):
            raise ValueError("orientation must be 'xy' or 'z'")
        if self.separation_m <= 0:
            raise ValueError("separation must be positive")


@dataclass
class ConditionResult:
    kappa: float
    separation_m: float
    snapped_separation_m: float
    degenerate: bool
    voxel_indices: np.ndarray


def constellation_positions(grid: VoxelGrid, spec: ConstellationSpec) -> np.ndarray:
    """Metric target positions (k, 3), symmetric about the grid center."""
    cx, cy, cz = grid.center_m
    d = spec.separation_m / 2.0
    if spec.orientation == "xy":
        corners = [(-d, -d), (d, d), (-d, d), (d, -d)][: spec.n_targets]
        return np.array([(cx + ox, cy + oy, cz) for ox, oy in corners])
    offsets = (np.arange(spec.n_targets) - (spec.n_targets - 1) / 2.0) * spec.separation_m
    return np.array([(cx, cy, cz + oz) for oz in offsets])


def constellation_voxels(grid: VoxelGrid, spec: ConstellationSpec):
    """Snapped voxel indices plus the realized separation and degeneracy flag."""
    positions = constellation_positions(grid, spec)
    snapped = np.array([grid.snap(p) for p in positions])
    flat = grid.flat_index(snapped[:, 0], snapped[:, 1], snapped[:, 2])
    degenerate = len(set(flat.tolist())) < len(flat)
    axis = 0 if spec.orientation == "xy" else 2
    span = snapped[:, axis].max() - snapped[:, axis].min()
    if spec.orientation == "xy":
        snapped_sep = span * grid.pitch[0]
    else:
        snapped_sep = (span / max(spec.n_targets - 1, 1)) * grid.pitch[2]
    return flat, float(snapped_sep), degenerate


def column_condition_number(config: ImagingConfig, voxel_indices) -> float:
    """kappa = sigma_max / sigma_min of the chosen columns of A."""
    cols = extract_columns(config, voxel_indices)
    sv = np.linalg.svd(cols, compute_uv=False)
    if sv[-1] < 1e-300:
        return KAPPA_CAP
    return float(sv[0] / sv[-1])


def submatrix_condition(config: ImagingConfig, spec: ConstellationSpec) -> ConditionResult:
    """Condition number of the constellation's column submatrix.

    A degenerate constellation (targets snapping to one voxel, i.e. a
    duplicate column) reports the cap directly.
    """
    flat, snapped_sep, degenerate = constellation_voxels(config.grid, spec)
    kappa = KAPPA_CAP if degenerate else column_condition_number(config, flat)
    return ConditionResult(
        kappa=kappa,
        separation_m=spec.separation_m,
        snapped_separation_m=snapped_sep,
        degenerate=degenerate,
        voxel_indices=flat,
    )


@dataclass
class SweepTable:
    rows: list[ConditionResult]
    n_targets: int
    orientation: str
    config_hash: str


def condition_sweep(
    config: ImagingConfig, n_targets: int, separations_m, orientation: str = "xy"
) -> SweepTable:
    """Condition numbers over ascending separations (one row per separation)."""
    separations_m = list(separations_m)
    if any(b < a for a, b in zip(separations_m, separations_m[1:])):
        raise ValueError("separations must be ascending")
    rows = [
        submatrix_condition(config, ConstellationSpec(n_targets, sep, orientation))
        for sep in separations_m
    ]
    return SweepTable(rows, n_targets, orientation, config_hash(config))


def resolution_scenes(grid: VoxelGrid) -> list[SceneRecord]:
    """The eight point-target demonstration scenes.

    Four cross-range scenes (4 targets, separations 2.50/3.75/5.00/6.25 cm on
    the center range slice) followed by four range scenes (2 targets,
    separations 1.250/1.875/2.500/3.125 cm along the central axis).
    """
    scenes = []
    for sep in XY_RESOLUTION_SEPARATIONS_M:
        spec = ConstellationSpec(4, sep, "xy")
        scenes.append(point_target_scene(grid, constellation_positions(grid, spec)))
    for sep in Z_RESOLUTION_SEPARATIONS_M:
        spec = ConstellationSpec(2, sep, "z")
        scenes.append(point_target_scene(grid, constellation_positions(grid, spec)))
    return scenes
