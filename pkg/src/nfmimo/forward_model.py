"""Discrete observation model y = A s + w.

The (m, n) system-matrix entry is

    A[m, n] = p(k_m) * exp(-1j * k_m * (d_t + d_r)) / (4 * pi * d_t * d_r)

with d_t, d_r the distances from voxel n's center to the transmit/receive
antenna of measurement m. Matrix-free application factorizes the per-pair
exponential into per-antenna tensors exp(-1j*k*d)/d, so one forward or
adjoint pass is a handful of BLAS products per frequency; the factor tensors
are cached per config.

Evaluation order is fixed (one pass per frequency, single-threaded numpy
apart from BLAS), so repeated runs on the same machine and BLAS thread
setting are bit-stable; cross-run tests may rely on that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import ImagingConfig, VoxelGrid
from .rng import normal_pairs, stream_rng

FOUR_PI = 4.0 * np.pi

DENSE_BUDGET_BYTES = 4 * 1024**3  # default ceiling for materializing A


class DegenerateGeometryError(ValueError):
    """A voxel center coincides with an antenna (zero propagation distance)."""


class CapacityError(MemoryError):
    """Dense matrix would exceed the memory budget; use the matrix-free ops."""


class UndefinedSnrError(ValueError):
    """SNR calibration is undefined for an all-zero scene."""


@dataclass
class ReflectivityVolume:
    """Complex voxel field with its grid; values shaped (nx, ny, nz)."""

    values: np.ndarray
    grid: VoxelGrid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")

    @classmethod
    def zeros(cls, grid: VoxelGrid) -> "ReflectivityVolume":
        return cls(np.zeros(grid.shape, dtype=np.complex128), grid)

    @classmethod
    def from_flat(cls, flat, grid: VoxelGrid) -> "ReflectivityVolume":
        return cls(np.asarray(flat, dtype=np.complex128).reshape(grid.shape), grid)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)


@dataclass
class MeasurementVector:
    """Complex measurements in canonical m-order with their config."""

    values: np.ndarray
    config: ImagingConfig

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128).reshape(-1)
        if self.values.shape[0] != self.config.n_measurements:
            raise ValueError(
                f"got {self.values.shape[0]} measurements, config defines {self.config.n_measurements}"
            )


@dataclass
class SystemMatrix:
    """Dense M x N realization of the observation matrix."""

    entries: np.ndarray
    config: ImagingConfig


@dataclass(frozen=True)
class NoiseSpec:
    """SNR-calibrated complex white Gaussian noise; snr_db=inf disables it."""

    snr_db: float
    seed: int

    def __post_init__(self):
        if math.isnan(self.snr_db):
            raise ValueError("snr_db must not be NaN")


def _entries(config: ImagingConfig, m, n) -> np.ndarray:
    """System-matrix entries for broadcastable index arrays m, n.

    Single code path shared by matrix_entry, build_matrix, and column
    extraction so all of them agree bitwise.
    """
    m = np.asarray(m)
    n = np.asarray(n)
    i_tx, i_rx, i_f = config.measurement_components(m)
    centers = config.grid.voxel_centers[n]  # (..., 3)
    d_t = np.linalg.norm(config.array.tx[i_tx] - centers, axis=-1)
    d_r = np.linalg.norm(config.array.rx[i_rx] - centers, axis=-1)
    if np.any(d_t == 0.0) or np.any(d_r == 0.0):
        raise DegenerateGeometryError("voxel center coincides with an antenna position")
    k = config.freqs.wavenumbers[i_f]
    p = config.pulse_weights[i_f]
    return p * np.exp(-1j * (k * (d_t + d_r))) / (FOUR_PI * d_t * d_r)


def matrix_entry(config: ImagingConfig, m: int, n: int) -> complex:
    """Contribution of voxel n to measurement m."""
    if not 0 <= m < config.n_measurements:
        raise IndexError(f"measurement index {m} out of range")
    if not 0 <= n < config.n_voxels:
        raise IndexError(f"voxel index {n} out of range")
    return complex(_entries(config, m, n))


def build_matrix(config: ImagingConfig, budget_bytes: int = DENSE_BUDGET_BYTES) -> SystemMatrix:
    """Materialize the dense observation matrix (small configs only)."""
    m_count, n_count = config.n_measurements, config.n_voxels
    need = m_count * n_count * 16
    if need > budget_bytes:
        raise CapacityError(
            f"dense matrix needs {need / 2**30:.2f} GiB (> {budget_bytes / 2**30:.2f} GiB budget); "
            "use apply_forward/apply_adjoint instead"
        )
    entries = np.empty((m_count, n_count), dtype=np.complex128)
    cols = np.arange(n_count)
    for m in range(m_count):
        entries[m] = _entries(config, m, cols)
    return SystemMatrix(entries, config)


def extract_columns(config: ImagingConfig, voxel_indices) -> np.ndarray:
    """Dense columns of A for the given voxels, computed matrix-free (M x k)."""
    voxel_indices = np.asarray(voxel_indices, dtype=int)
    rows = np.arange(config.n_measurements)[:, None]
    return _entries(config, rows, voxel_indices[None, :])


class _Operator:
    """Cached factorized operator for one config.

    qt[f, t, n] = exp(-1j*k_f*d_t[t, n]) / d_t[t, n] and likewise qr, so

        y[t, r, f] = p_f / (4*pi) * sum_n qt[f, t, n] * qr[f, r, n] * s[n]

    is a (n_tx, N) @ (N, n_rx) product per frequency.
    """

    def __init__(self, config: ImagingConfig):
        self.config = config
        centers = config.grid.voxel_centers
        self.d_t = np.linalg.norm(config.array.tx[:, None, :] - centers[None], axis=2)
        self.d_r = np.linalg.norm(config.array.rx[:, None, :] - centers[None], axis=2)
        if self.d_t.min() == 0.0 or self.d_r.min() == 0.0:
            raise DegenerateGeometryError("voxel center coincides with an antenna position")
        k = config.freqs.wavenumbers
        self.qt = np.exp(-1j * k[:, None, None] * self.d_t[None]) / self.d_t[None]
        self.qr = np.exp(-1j * k[:, None, None] * self.d_r[None]) / self.d_r[None]
        self._phase_t = None  # lazily built pure-phase factors for BP
        self._phase_r = None

    @property
    def shape_trf(self) -> tuple[int, int, int]:
        return (self.config.array.n_tx, self.config.array.n_rx, self.config.freqs.n_steps)

    def forward(self, s_flat: np.ndarray) -> np.ndarray:
        n_tx, n_rx, n_f = self.shape_trf
        pulse = self.config.pulse_weights
        scaled = s_flat / FOUR_PI
        out = np.empty((n_tx, n_rx, n_f), dtype=np.complex128)
        for f in range(n_f):
            out[:, :, f] = pulse[f] * ((self.qt[f] * scaled) @ self.qr[f].T)
        return out.reshape(-1)

    def adjoint(self, y_flat: np.ndarray) -> np.ndarray:
        # A^H y evaluated as conj(sum_f p_f * sum_t qt[f,t,:] * (conj(y_f) @ qr[f])),
        # which conjugates only the small per-frequency measurement block.
        n_tx, n_rx, n_f = self.shape_trf
        pulse = self.config.pulse_weights
        y = y_flat.reshape(n_tx, n_rx, n_f)
        acc = np.zeros(self.config.n_voxels, dtype=np.complex128)
        for f in range(n_f):
            h = np.conj(y[:, :, f]) @ self.qr[f]  # (n_tx, N)
            acc += pulse[f] * np.einsum("tn,tn->n", self.qt[f], h)
        return np.conj(acc) / FOUR_PI

    def backproject(self, y_flat: np.ndarray) -> np.ndarray:
        """(1/M) sum_m y_m exp(+1j k_m (d_t + d_r)); no amplitude, no pulse."""
        if self._phase_t is None:
            self._phase_t = self.qt * self.d_t[None]
            self._phase_r = self.qr * self.d_r[None]
        n_tx, n_rx, n_f = self.shape_trf
        y = y_flat.reshape(n_tx, n_rx, n_f)
        acc = np.zeros(self.config.n_voxels, dtype=np.complex128)
        for f in range(n_f):
            h = np.conj(y[:, :, f]) @ self._phase_r[f]
            acc += np.einsum("tn,tn->n", self._phase_t[f], h)
        return np.conj(acc) / self.config.n_measurements


@lru_cache(maxsize=4)
def _operator(config: ImagingConfig) -> _Operator:
    return _Operator(config)


def apply_forward(config: ImagingConfig, s: ReflectivityVolume) -> MeasurementVector:
    """y = A s without materializing A."""
    if s.grid != config.grid:
        raise ValueError("scene grid does not match the config grid")
    return MeasurementVector(_operator(config).forward(s.flat), config)


def apply_adjoint(config: ImagingConfig, y: MeasurementVector) -> ReflectivityVolume:
    """s_hat = A^H y without materializing A."""
    if y.config != config:
        raise ValueError("measurement config does not match")
    return ReflectivityVolume.from_flat(_operator(config).adjoint(y.values), config.grid)


def noise_sigma_from_snr(config: ImagingConfig, s: ReflectivityVolume, snr_db: float) -> float:
    """sigma_w with SNR defined as 10*log10(||As||^2 / (M * sigma_w^2))."""
    energy = float(np.sum(np.abs(apply_forward(config, s).values) ** 2))
    return sigma_from_energy(energy, config.n_measurements, snr_db)


def sigma_from_energy(signal_energy: float, n_measurements: int, snr_db: float) -> float:
    if signal_energy <= 0.0:
        raise UndefinedSnrError("||As||^2 is zero; SNR is undefined for an all-zero scene")
    return math.sqrt(signal_energy / (n_measurements * 10.0 ** (snr_db / 10.0)))


def add_noise(
    y: MeasurementVector, spec: NoiseSpec, s: ReflectivityVolume, config: ImagingConfig
) -> MeasurementVector:
    """y + w with w_m = sigma_w*(g1 + 1j*g2)/sqrt(2), Box-Muller normals.

    Total per-sample variance is sigma_w^2 (split equally between real and
    imaginary parts). snr_db = +inf returns the measurements unchanged.
    """
    if math.isinf(spec.snr_db) and spec.snr_db > 0:
        return MeasurementVector(y.values.copy(), y.config)
    sigma = noise_sigma_from_snr(config, s, spec.snr_db)
    gen = stream_rng(spec.seed, 0)
    g1, g2 = normal_pairs(gen, y.values.shape[0])
    w = sigma * (g1 + 1j * g2) / math.sqrt(2.0)
    return MeasurementVector(y.values + w, y.config)
