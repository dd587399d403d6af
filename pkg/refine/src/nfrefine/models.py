"""Reconstruction networks: refinement U-Net and the learned first stages.

Three model kinds share the same four-level 3D U-Net refinement stage:

  deep2s       physics-computed normalized adjoint volume -> U-Net
  deepdi       measurements -> dense layer -> ZOH z-upsample -> U-Net
  deep2s_plus  measurements -> trainable complex projection (initialized from
               the adjoint matrix) -> magnitude + max-normalization -> U-Net

Volumes are (x, y, z) with odd extents; the U-Net crops the last index per
axis on entry so the three 2x2x2 poolings divide evenly, and replicate-pads
the outputs back.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

# exact parameter count of the default-width (23) U-Net; pinned for the repo
UNET3D_REFERENCE_PARAM_COUNT = 2_895_356
DEFAULT_BASE_WIDTH = 23


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


class _DoubleConv(nn.Module):
    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv3d(c_in, c_out, 3, padding=1),
            nn.BatchNorm3d(c_out),
            nn.ReLU(inplace=True),
            nn.Conv3d(c_out, c_out, 3, padding=1),
            nn.BatchNorm3d(c_out),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class UNet3D(nn.Module):
    """Four-level encoder/decoder with skip concatenations.

    3x3x3 convolutions + batch norm + ReLU, 2x2x2 max pooling, stride-2
    transposed-conv upsampling, 1x1x1 output convolution, linear output.
    """

    def __init__(self, base_width: int = DEFAULT_BASE_WIDTH, in_channels: int = 1):
        super().__init__()
        w = base_width
        self.enc1 = _DoubleConv(in_channels, w)
        self.enc2 = _DoubleConv(w, 2 * w)
        self.enc3 = _DoubleConv(2 * w, 4 * w)
        self.bottom = _DoubleConv(4 * w, 8 * w)
        self.pool = nn.MaxPool3d(2, 2)
        self.up3 = nn.ConvTranspose3d(8 * w, 4 * w, 2, stride=2)
        self.dec3 = _DoubleConv(8 * w, 4 * w)
        self.up2 = nn.ConvTranspose3d(4 * w, 2 * w, 2, stride=2)
        self.dec2 = _DoubleConv(4 * w, 2 * w)
        self.up1 = nn.ConvTranspose3d(2 * w, w, 2, stride=2)
        self.dec1 = _DoubleConv(2 * w, w)
        self.out = nn.Conv3d(w, 1, 1)
        if base_width == DEFAULT_BASE_WIDTH and in_channels == 1:
            actual = count_parameters(self)
            if actual != UNET3D_REFERENCE_PARAM_COUNT:
                raise AssertionError(
                    f"default U-Net has {actual} parameters, pinned {UNET3D_REFERENCE_PARAM_COUNT}"
                )

    def forward(self, x):
        # (B, C, X, Y, Z) with odd spatial extents: crop the last index per
        # axis, run the U-Net, replicate-pad the trailing faces back
        x = x[:, :, : x.shape[2] - x.shape[2] % 2,
              : x.shape[3] - x.shape[3] % 2,
              : x.shape[4] - x.shape[4] % 2]
        e1 = self.enc1(x)
        e2 = self.enc2(self.pool(e1))
        e3 = self.enc3(self.pool(e2))
        b = self.bottom(self.pool(e3))
        d3 = self.dec3(torch.cat([self.up3(b), e3], dim=1))
        d2 = self.dec2(torch.cat([self.up2(d3), e2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1))
        y = self.out(d1)
        return F.pad(y, (0, 1, 0, 1, 0, 1), mode="replicate")


class Deep2S(nn.Module):
    """Refinement of the physics-computed normalized adjoint volume."""

    def __init__(self, grid_shape, base_width: int = DEFAULT_BASE_WIDTH):
        super().__init__()
        self.grid_shape = tuple(grid_shape)
        self.unet = UNet3D(base_width)

    def forward(self, adjoint_volume):
        # (B, X, Y, Z) in [0, 1]
        return self.unet(adjoint_volume.unsqueeze(1)).squeeze(1)


class DeepDI(nn.Module):
    """Fully learned direct inversion: dense map + zero-order-hold upsample.

    The dense stage maps the concatenated real/imaginary measurement parts
    (2M inputs) to an (nx, ny, (nz+1)//2) cube; the cube is upsampled by two
    along z with zero-order hold and cropped by one to reach nz.
    """

    def __init__(self, grid_shape, n_measurements: int, base_width: int = DEFAULT_BASE_WIDTH):
        super().__init__()
        self.grid_shape = tuple(grid_shape)
        self.n_measurements = n_measurements
        nx, ny, nz = self.grid_shape
        self.nz_half = (nz + 1) // 2
        self.dense = nn.Linear(2 * n_measurements, nx * ny * self.nz_half, bias=True)
        expected = (2 * n_measurements + 1) * nx * ny * self.nz_half
        actual = count_parameters(self.dense)
        if actual != expected:
            raise AssertionError(f"dense stage has {actual} parameters, expected {expected}")
        self.unet = UNet3D(base_width)

    def first_stage(self, y_parts):
        # y_parts: (B, 2M) = [Re(y), Im(y)]
        nx, ny, nz = self.grid_shape
        cube = self.dense(y_parts).reshape(-1, nx, ny, self.nz_half)
        upsampled = torch.repeat_interleave(cube, 2, dim=3)
        return upsampled[:, :, :, :nz]

    def forward(self, y_parts):
        return self.unet(self.first_stage(y_parts).unsqueeze(1)).squeeze(1)


class ProjectionLayer(nn.Module):
    """Trainable complex projection of measurements into the image space.

    Realized as the real block form [[P_R, -P_I], [P_I, P_R]] acting on the
    stacked (Re y, Im y); parameters are the two real N x M matrices with no
    bias, 2*N*M in total.
    """

    def __init__(self, n_voxels: int, n_measurements: int):
        super().__init__()
        self.p_real = nn.Parameter(torch.zeros(n_voxels, n_measurements))
        self.p_imag = nn.Parameter(torch.zeros(n_voxels, n_measurements))
        expected = 2 * n_voxels * n_measurements
        actual = count_parameters(self)
        if actual != expected:
            raise AssertionError(f"projection has {actual} parameters, expected {expected}")

    def init_from_adjoint(self, adjoint_matrix: np.ndarray) -> None:
        """Set P_R + j P_I = A^H given the N x M adjoint matrix."""
        if adjoint_matrix.shape != tuple(self.p_real.shape):
            raise ValueError(f"adjoint matrix shape {adjoint_matrix.shape} != {tuple(self.p_real.shape)}")
        with torch.no_grad():
            self.p_real.copy_(torch.from_numpy(np.ascontiguousarray(adjoint_matrix.real)).float())
            self.p_imag.copy_(torch.from_numpy(np.ascontiguousarray(adjoint_matrix.imag)).float())

    def forward(self, y_real, y_imag):
        v_real = y_real @ self.p_real.T - y_imag @ self.p_imag.T
        v_imag = y_real @ self.p_imag.T + y_imag @ self.p_real.T
        return v_real, v_imag


class Deep2SPlus(nn.Module):
    """Deep2S with the adjoint replaced by a trainable projection layer.

    With the projection initialized from A^H, the first stage reproduces the
    normalized adjoint magnitude exactly, so an untrained Deep2SPlus equals
    the Deep2S it was warm-started from.
    """

    def __init__(self, grid_shape, n_measurements: int, base_width: int = DEFAULT_BASE_WIDTH):
        super().__init__()
        self.grid_shape = tuple(grid_shape)
        self.n_measurements = n_measurements
        n_voxels = int(np.prod(grid_shape))
        self.projection = ProjectionLayer(n_voxels, n_measurements)
        self.unet = UNet3D(base_width)

    def first_stage(self, y_real, y_imag):
        v_real, v_imag = self.projection(y_real, y_imag)
        mag = torch.sqrt(v_real**2 + v_imag**2).reshape(-1, *self.grid_shape)
        peak = mag.amax(dim=(1, 2, 3), keepdim=True).clamp_min(1e-30)
        return mag / peak

    def forward(self, y_real, y_imag):
        return self.unet(self.first_stage(y_real, y_imag).unsqueeze(1)).squeeze(1)


def deep2s_infer(adjoint_image: np.ndarray, model: Deep2S) -> np.ndarray:
    """Refine one normalized adjoint volume; output clamped to [0, 1]."""
    if tuple(adjoint_image.shape) != model.grid_shape:
        raise ValueError(f"input shape {adjoint_image.shape} != model grid {model.grid_shape}")
    if not np.all(np.isfinite(adjoint_image)):
        raise ValueError("non-finite values in the input volume")
    model.eval()
    with torch.no_grad():
        x = torch.from_numpy(np.ascontiguousarray(adjoint_image)).float().unsqueeze(0)
        out = model(x).squeeze(0)
    return out.clamp(0.0, 1.0).numpy()


def make_model(model_kind: str, grid_shape, n_measurements: int,
               base_width: int = DEFAULT_BASE_WIDTH) -> nn.Module:
    if model_kind == "deep2s":
        return Deep2S(grid_shape, base_width)
    if model_kind == "deepdi":
        return DeepDI(grid_shape, n_measurements, base_width)
    if model_kind == "deep2s_plus":
        return Deep2SPlus(grid_shape, n_measurements, base_width)
    raise ValueError(f"unknown model kind {model_kind!r}")
