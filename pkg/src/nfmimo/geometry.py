"""Antenna arrays, frequency grids, voxel grids, and canonical indexing.

All geometry objects are immutable (frozen dataclasses) and hashable, so they
can be shared across threads and used as cache keys for the matrix-free
operators. Canonical orderings used throughout the toolkit:

  measurement index  m = (i_tx * N_rx + i_rx) * N_f + i_f
  voxel index        n = (i_x * n_y + i_y) * n_z + i_z

i.e. C-order raveling of (tx, rx, freq) and (x, y, z) respectively.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

C_LIGHT = 299_792_458.0  # m/s, exact

Point = tuple[float, float, float]


class ArrayFormatError(ValueError):
    """Raised when an array/config file does not parse or violates the schema."""


def _as_point_tuple(p) -> Point:
    x, y, z = (float(v) for v in p)
    return (x, y, z)


@dataclass(frozen=True)
class AntennaArray:
    """Planar MIMO array in the z=0 plane.

    Positions are stored as tuples (meters); `tx` / `rx` expose them as
    (n, 3) float arrays.
    """

    tx_positions: tuple[Point, ...]
    rx_positions: tuple[Point, ...]

    def __post_init__(self):
        for name, positions in (("tx", self.tx_positions), ("rx", self.rx_positions)):
            if len(positions) == 0:
                raise ValueError(f"{name} position list is empty")
            if any(p[2] != 0.0 for p in positions):
                raise ValueError(f"{name} positions must lie in the z=0 plane")
            if len(set(positions)) != len(positions):
                raise ValueError(f"duplicate {name} positions")

    @property
    def n_tx(self) -> int:
        return len(self.tx_positions)

    @property
    def n_rx(self) -> int:
        return len(self.rx_positions)

    @cached_property
    def tx(self) -> np.ndarray:
        return np.asarray(self.tx_positions, dtype=np.float64)

    @cached_property
    def rx(self) -> np.ndarray:
        return np.asarray(self.rx_positions, dtype=np.float64)


def mills_cross(width_m: float, n_tx: int, n_rx: int) -> AntennaArray:
    """Mills Cross array: Tx on the horizontal arm, Rx on the vertical arm.

    Transmitters are uniformly spaced on y=0 with x in [-width/2, +width/2]
    and receivers on x=0 with y in the same span; endpoints included.
    """
    if width_m <= 0:
        raise ValueError(f"width must be positive, got {width_m}")
    if n_tx < 2 or n_rx < 2:
        raise ValueError(f"need at least 2 antennas per arm, got {n_tx} tx / {n_rx} rx")
    xs = np.linspace(-width_m / 2, width_m / 2, n_tx)
    ys = np.linspace(-width_m / 2, width_m / 2, n_rx)
    tx = tuple((float(x), 0.0, 0.0) for x in xs)
    rx = tuple((0.0, float(y), 0.0) for y in ys)
    return AntennaArray(tx, rx)


def load_array(path) -> AntennaArray:
    """Load an array file: JSON {"tx": [[x,y,z],...], "rx": [[x,y,z],...]}.

    Coordinates are meters. z components are forced to 0; a warning is
    emitted if any |z| exceeds 1e-9 m.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ArrayFormatError(f"cannot parse array file {path}: {exc}") from exc
    return _array_from_dict(data, source=str(path))


def _array_from_dict(data, source: str = "<inline>") -> AntennaArray:
    if not isinstance(data, dict) or "tx" not in data or "rx" not in data:
        raise ArrayFormatError(f"{source}: array object needs 'tx' and 'rx' lists")
    out = {}
    for key in ("tx", "rx"):
        rows = data[key]
        if not isinstance(rows, list) or len(rows) == 0:
            raise ArrayFormatError(f"{source}: '{key}' must be a non-empty list")
        points = []
        for row in rows:
            if len(row) != 3:
                raise ArrayFormatError(f"{source}: '{key}' rows must have 3 coordinates")
            x, y, z = (float(v) for v in row)
            if abs(z) > 1e-9:
                warnings.warn(
                    f"{source}: {key} position has z={z:g} m; forcing to the z=0 plane",
                    stacklevel=2,
                )
            points.append((x, y, 0.0))
        out[key] = tuple(points)
    try:
        return AntennaArray(out["tx"], out["rx"])
    except ValueError as exc:
        raise ArrayFormatError(f"{source}: {exc}") from exc


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform frequency sweep, endpoints included."""

    f_min_hz: float
    f_max_hz: float
    n_steps: int

    def __post_init__(self):
        if not self.f_min_hz < self.f_max_hz:
            raise ValueError("f_min must be strictly below f_max")
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")
        if self.f_min_hz <= 0:
            raise ValueError("frequencies must be positive")

    @cached_property
    def frequencies(self) -> np.ndarray:
        return np.linspace(self.f_min_hz, self.f_max_hz, self.n_steps)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """k_i = 2*pi*f_i / c, rad/m."""
        return 2.0 * np.pi * self.frequencies / C_LIGHT


def _round_half_up(x) -> np.ndarray:
    # np.rint rounds halves to even; the snapping contract is half-up.
    return np.floor(np.asarray(x) + 0.5).astype(int)


@dataclass(frozen=True)
class VoxelGrid:
    """Regular voxel grid; centers at cube_center + (i - (n-1)/2) * pitch."""

    nx: int
    ny: int
    nz: int
    dx_m: float
    dy_m: float
    dz_m: float
    center_m: Point = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError("voxel counts must be positive")
        if min(self.dx_m, self.dy_m, self.dz_m) <= 0:
            raise ValueError("voxel pitch must be positive")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def n_voxels(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def pitch(self) -> np.ndarray:
        return np.array([self.dx_m, self.dy_m, self.dz_m])

    def axis_coords(self, axis: int) -> np.ndarray:
        n = self.shape[axis]
        delta = self.pitch[axis]
        return self.center_m[axis] + (np.arange(n) - (n - 1) / 2.0) * delta

    @cached_property
    def voxel_centers(self) -> np.ndarray:
        """(N, 3) centers in canonical voxel order."""
        xs, ys, zs = (self.axis_coords(a) for a in range(3))
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def flat_index(self, ix, iy, iz):
        return (np.asarray(ix) * self.ny + np.asarray(iy)) * self.nz + np.asarray(iz)

    def unravel(self, n):
        n = np.asarray(n)
        iz = n % self.nz
        iy = (n // self.nz) % self.ny
        ix = n // (self.nz * self.ny)
        return ix, iy, iz

    def snap(self, point, clip: bool = False) -> tuple[int, int, int]:
        """Nearest voxel (half-up rounding per axis) to a metric point.

        Fractional indices are quantized at 1e-9 voxels first, so positions
        constructed to sit exactly on a half-voxel boundary are not thrown to
        the wrong side by float rounding.
        """
        idx = []
        for axis in range(3):
            n = self.shape[axis]
            frac = (point[axis] - self.center_m[axis]) / self.pitch[axis] + (n - 1) / 2.0
            i = int(_round_half_up(np.round(frac, 9)))
            if clip:
                i = min(max(i, 0), n - 1)
            elif not 0 <= i < n:
                raise ValueError(f"point {tuple(point)} snaps outside the grid on axis {axis}")
            idx.append(i)
        return tuple(idx)


def voxel_center(grid: VoxelGrid, n: int) -> np.ndarray:
    """Metric center of the voxel with canonical index n."""
    if not 0 <= n < grid.n_voxels:
        raise IndexError(f"voxel index {n} out of range [0, {grid.n_voxels})")
    ix, iy, iz = grid.unravel(n)
    return np.array(
        [grid.axis_coords(0)[ix], grid.axis_coords(1)[iy], grid.axis_coords(2)[iz]]
    )


@dataclass(frozen=True)
class ImagingConfig:
    """Full observation geometry: array + frequency sweep + voxel grid.

    pulse_spectrum holds per-frequency complex weights p(k); None means the
    constant spectrum p(k) = 1.
    """

    array: AntennaArray
    freqs: FrequencyGrid
    grid: VoxelGrid
    pulse_spectrum: tuple[complex, ...] | None = None

    def __post_init__(self):
        if self.pulse_spectrum is not None and len(self.pulse_spectrum) != self.freqs.n_steps:
            raise ValueError("pulse_spectrum length must equal the number of frequency steps")

    @property
    def n_measurements(self) -> int:
        return self.array.n_tx * self.array.n_rx * self.freqs.n_steps

    @property
    def n_voxels(self) -> int:
        return self.grid.n_voxels

    @cached_property
    def pulse_weights(self) -> np.ndarray:
        if self.pulse_spectrum is None:
            return np.ones(self.freqs.n_steps, dtype=np.complex128)
        return np.asarray(self.pulse_spectrum, dtype=np.complex128)

    def measurement_index(self, i_tx, i_rx, i_f):
        return (np.asarray(i_tx) * self.array.n_rx + np.asarray(i_rx)) * self.freqs.n_steps + np.asarray(i_f)

    def measurement_components(self, m):
        m = np.asarray(m)
        n_f = self.freqs.n_steps
        n_rx = self.array.n_rx
        i_f = m % n_f
        i_rx = (m // n_f) % n_rx
        i_tx = m // (n_f * n_rx)
        return i_tx, i_rx, i_f


def reference_config(n_steps: int = 15) -> ImagingConfig:
    """The 0.3 m Mills Cross, 4-16 GHz sweep, 25x25x49 grid at 0.5 m standoff."""
    return ImagingConfig(
        array=mills_cross(0.3, 12, 13),
        freqs=FrequencyGrid(4e9, 16e9, n_steps),
        grid=VoxelGrid(25, 25, 49, 0.0125, 0.0125, 0.00625, (0.0, 0.0, 0.5)),
    )


def config_to_dict(config: ImagingConfig) -> dict:
    return {
        "array": {
            "tx": [list(p) for p in config.array.tx_positions],
            "rx": [list(p) for p in config.array.rx_positions],
        },
        "f_min_hz": config.freqs.f_min_hz,
        "f_max_hz": config.freqs.f_max_hz,
        "n_steps": config.freqs.n_steps,
        "grid": {
            "nx": config.grid.nx,
            "ny": config.grid.ny,
            "nz": config.grid.nz,
            "dx_m": config.grid.dx_m,
            "dy_m": config.grid.dy_m,
            "dz_m": config.grid.dz_m,
            "center_m": list(config.grid.center_m),
        },
    }


def config_from_dict(data: dict, base_dir: Path | None = None) -> ImagingConfig:
    try:
        array_spec = data["array"]
        if isinstance(array_spec, str):
            path = Path(array_spec)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            array = load_array(path)
        else:
            array = _array_from_dict(array_spec)
        grid_spec = data["grid"]
        grid = VoxelGrid(
            nx=int(grid_spec["nx"]),
            ny=int(grid_spec["ny"]),
            nz=int(grid_spec["nz"]),
            dx_m=float(grid_spec["dx_m"]),
            dy_m=float(grid_spec["dy_m"]),
            dz_m=float(grid_spec["dz_m"]),
            center_m=_as_point_tuple(grid_spec["center_m"]),
        )
        freqs = FrequencyGrid(float(data["f_min_hz"]), float(data["f_max_hz"]), int(data["n_steps"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ArrayFormatError):
            raise
        raise ArrayFormatError(f"invalid config: {exc}") from exc
    return ImagingConfig(array=array, freqs=freqs, grid=grid)


def load_config(path) -> ImagingConfig:
    """Load a config file per the JSON schema (array inline or by path)."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ArrayFormatError(f"cannot parse config file {path}: {exc}") from exc
    return config_from_dict(data, base_dir=path.parent)


def save_config(config: ImagingConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=2)


def config_hash(config: ImagingConfig) -> str:
    """SHA-256 of the canonical config JSON; embedded in output file metadata."""
    payload = config_to_dict(config)
    if config.pulse_spectrum is not None:
        payload["pulse_spectrum"] = [[z.real, z.imag] for z in map(complex, config.pulse_spectrum)]
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
