"""3D near-field MIMO radar imaging toolkit.

Simulates frequency-domain multistatic measurements from a physics-based
observation model, reconstructs complex reflectivity volumes (backprojection,
adjoint, TV-regularized least squares), synthesizes randomized training
scenes, and evaluates reconstruction quality and resolution.
"""

from .geometry import (
    AntennaArray,
    FrequencyGrid,
    ImagingConfig,
    VoxelGrid,
    load_array,
    load_config,
    mills_cross,
    reference_config,
    voxel_center,
)
from .forward_model import (
    MeasurementVector,
    NoiseSpec,
    ReflectivityVolume,
    SystemMatrix,
    add_noise,
    apply_adjoint,
    apply_forward,
    build_matrix,
    matrix_entry,
    noise_sigma_from_snr,
)
from .recon_direct import adjoint_image, backprojection
from .recon_tv import TvParams, TvResult, div3d, grad3d, objective_value, tv_solve
from .synthesizer import SceneRecord, SceneSpec, ellipsoid_scene, generate_dataset, generate_scene, point_target_scene
from .metrics import compression_ratio, psnr3d, ssim_slice_avg
from .analysis import ConstellationSpec, condition_sweep, resolution_scenes, submatrix_condition
from .tensorio import read_tensor, write_tensor

__version__ = "0.1.0"
