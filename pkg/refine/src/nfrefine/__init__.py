"""Learned refinement for near-field MIMO radar reconstructions.

Consumes datasets exported by the imaging toolkit strictly through the
shared tensor container format and manifest JSON.
"""

from .models import (
    DEFAULT_BASE_WIDTH,
    Deep2S,
    Deep2SPlus,
    DeepDI,
    ProjectionLayer,
    UNET3D_REFERENCE_PARAM_COUNT,
    UNet3D,
    count_parameters,
    deep2s_infer,
    make_model,
)
from .train import TrainSpec, load_checkpoint, train

__version__ = "0.1.0"
