"""Regularized least squares with 3D total variation on the complex field.

Solves  min_s ||y - A s||^2 + lambda * sum_i sqrt(|(grad3d s)_i|^2 + eps)
by half-quadratic (iteratively reweighted) minimization: each outer step
freezes the weights w_i = 1 / (2*sqrt(|(grad3d s)_i|^2 + eps)) and solves

    (A^H A + lambda * div3d o w o grad3d) s = A^H y

with warm-started conjugate gradients, matrix-free throughout. Warm-starting
CG at the current iterate makes every outer step decrease the majorizing
quadratic, so the smoothed objective trace is non-increasing even with
truncated inner solves.

The penalty sums over all 3N stacked difference entries; the structurally
zero boundary entries each contribute sqrt(eps), a constant offset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forward_model import MeasurementVector, ReflectivityVolume, _operator
from .geometry import ImagingConfig


class NumericalFailureError(RuntimeError):
    """CG produced a non-finite residual; carries the objective trace so far."""

    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class TvParams:
    """Solver knobs.

    eps=None derives the smoothing constant as 1e-6 * max|grad3d(A^H y)|^2;
    objective_tol is the relative objective decrease that stops the outer
    loop early (no early stop when 0).
    """

    lam: float = 25.0
    eps: float | None = None
    outer_iters: int = 20
    cg_iters: int = 50
    cg_tol: float = 1e-6
    objective_tol: float = 1e-6

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.eps is not None and self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.outer_iters < 1 or self.cg_iters < 1:
            raise ValueError("iteration counts must be at least 1")


@dataclass
class TvResult:
    volume: ReflectivityVolume
    objective_trace: list[float] = field(default_factory=list)
    eps: float = 0.0


def grad3d(vol: np.ndarray) -> np.ndarray:
    """Forward differences along x, y, z; replicate boundary (last slice 0).

    Returns shape (3, nx, ny, nz).
    """
    out = np.zeros((3,) + vol.shape, dtype=vol.dtype)
    out[0, :-1] = vol[1:] - vol[:-1]
    out[1, :, :-1] = vol[:, 1:] - vol[:, :-1]
    out[2, :, :, :-1] = vol[:, :, 1:] - vol[:, :, :-1]
    return out


def _diff_adjoint(u: np.ndarray, axis: int) -> np.ndarray:
    # adjoint of the single-axis forward difference with trailing zero row:
    # out_j = u_{j-1}[j>=1] - u_j[j<=n-2]; the last input slice is ignored.
    out = np.zeros_like(u)
    sl_head = [slice(None)] * u.ndim
    sl_tail = [slice(None)] * u.ndim
    sl_head[axis] = slice(1, None)
    sl_tail[axis] = slice(None, -1)
    out[tuple(sl_head)] = u[tuple(sl_tail)]
    sl_int = [slice(None)] * u.ndim
    sl_int[axis] = slice(None, -1)
    out[tuple(sl_int)] -= u[tuple(sl_int)]
    return out


def div3d(u: np.ndarray) -> np.ndarray:
    """Exact numerical adjoint of grad3d (dot-test verified)."""
    return _diff_adjoint(u[0], 0) + _diff_adjoint(u[1], 1) + _diff_adjoint(u[2], 2)


def smoothed_tv(s_vol: np.ndarray, eps: float) -> float:
    g = grad3d(s_vol)
    return float(np.sum(np.sqrt(np.abs(g) ** 2 + eps)))


def objective_value(
    config: ImagingConfig, y: MeasurementVector, s: ReflectivityVolume, lam: float, eps: float
) -> float:
    """||y - A s||^2 + lambda * sum sqrt(|grad3d s|^2 + eps)."""
    residual = y.values - _operator(config).forward(s.flat)
    return float(np.sum(np.abs(residual) ** 2)) + lam * smoothed_tv(s.values, eps)


def _cg(apply_t, b, x0, max_iters, tol, trace):
    """Warm-started CG for a Hermitian PSD operator; returns the new iterate."""
    x = x0.copy()
    r = b - apply_t(x)
    p = r.copy()
    rs = float(np.vdot(r, r).real)
    stop = (tol * float(np.linalg.norm(b))) ** 2
    for _ in range(max_iters):
        if rs <= stop:
            break
        tp = apply_t(p)
        denom = float(np.vdot(p, tp).real)
        if denom <= 0 or not np.isfinite(denom):
            break  # numerical stagnation; keep the current (still monotone) iterate
        alpha = rs / denom
        x += alpha * p
        r -= alpha * tp
        rs_new = float(np.vdot(r, r).real)
        if not np.isfinite(rs_new):
            raise NumericalFailureError("non-finite CG residual", list(trace))
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def tv_solve(config: ImagingConfig, y: MeasurementVector, params: TvParams) -> TvResult:
    """Half-quadratic IRLS minimization of the smoothed TV objective."""
    if y.config != config:
        raise ValueError("measurement config does not match")
    op = _operator(config)
    shape = config.grid.shape

    aty = op.adjoint(y.values)
    s = aty.copy().reshape(shape)

    if params.eps is not None:
        eps = params.eps
    else:
        g0 = float(np.max(np.abs(grad3d(s)) ** 2))
        eps = 1e-6 * g0 if g0 > 0 else 1e-30

    trace: list[float] = []
    svol = ReflectivityVolume(s, config.grid)
    trace.append(objective_value(config, y, svol, params.lam, eps))

    def normal_op(x_flat, weights):
        x = x_flat.reshape(shape)
        data = op.adjoint(op.forward(x_flat))
        reg = div3d(weights * grad3d(x)).reshape(-1)
        return data + params.lam * reg

    x = s.reshape(-1)
    for _ in range(params.outer_iters):
        w = 1.0 / (2.0 * np.sqrt(np.abs(grad3d(x.reshape(shape))) ** 2 + eps))
        x = _cg(lambda v: normal_op(v, w), aty, x, params.cg_iters, params.cg_tol, trace)
        svol = ReflectivityVolume(x.reshape(shape), config.grid)
        obj = objective_value(config, y, svol, params.lam, eps)
        trace.append(obj)
        if trace[-2] - trace[-1] < params.objective_tol * abs(trace[-2]):
            break

    return TvResult(volume=svol, objective_trace=trace, eps=eps)
