"""Non-iterative reconstructions: backprojection and the normalized adjoint.

Backprojection is the phase-only coherent sum (no 1/(4*pi*d_t*d_r) amplitude
weighting, scaled by 1/M); the adjoint image is |A^H y| normalized to [0, 1],
the warm-start volume consumed by the learned refinement stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward_model import MeasurementVector, ReflectivityVolume, _operator, apply_adjoint
from .geometry import ImagingConfig, VoxelGrid


class UndefinedNormalizationError(ValueError):
    """Normalization of an all-zero adjoint volume is undefined."""


@dataclass
class NormalizedVolume:
    """Real volume in [0, 1] plus the scalar divided out of it."""

    values: np.ndarray
    scale: float
    grid: VoxelGrid


def backprojection(config: ImagingConfig, y: MeasurementVector) -> ReflectivityVolume:
    """s_hat_n = (1/M) * sum_m y_m * exp(+1j * k_m * (d_t + d_r))."""
    if y.config != config:
        raise ValueError("measurement config does not match")
    return ReflectivityVolume.from_flat(_operator(config).backproject(y.values), config.grid)


def adjoint_image(config: ImagingConfig, y: MeasurementVector) -> NormalizedVolume:
    """|A^H y| / max|A^H y|, with the normalization scalar kept for provenance."""
    mag = apply_adjoint(config, y).magnitude()
    scale = float(mag.max())
    if scale == 0.0:
        raise UndefinedNormalizationError("adjoint of an all-zero measurement cannot be normalized")
    return NormalizedVolume(mag / scale, scale, config.grid)
