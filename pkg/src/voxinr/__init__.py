"""Fourier-feature coordinate networks for volumetric compression with
selective voxel sampling.

The pipeline normalizes a dense multi-grid volume, selects training
voxels through an active-voxel mask (optionally dilated, or the full
bounding box), fits a sinusoidal-encoder MLP to the selected rows, and
scores full-volume reconstructions with NRMSE / PSNR / SSIM and a
combined quality score.
"""

__version__ = "0.1.0"

from .masks import CoordinateDataset, VoxelMask, compute_avm, dilate, extract_dataset
from .metrics import (
    PSNR_MAX_DB,
    QualityReport,
    compression_ratio,
    evaluate,
    nrmse,
    psnr,
    score,
    ssim,
)
from .network import (
    COORDINATE_CONVENTION,
    FfNetwork,
    FourierEncoder,
    Gradients,
    MlpParams,
    backward,
    encode,
    forward,
    init_network,
    param_count,
)
from .pipeline import (
    MaskVariant,
    SweepSpec,
    VariantResult,
    build_mask,
    parse_region,
    region_mean,
    run_sweep,
)
from .synthetic import SyntheticSpec, generate_synthetic
from .training import (
    TrainConfig,
    TrainReport,
    epoch_permutation,
    reconstruct_full,
    splitmix64,
    train,
)
from .volume import (
    MultiGridVolume,
    NormalizationParams,
    denormalize,
    index_to_xyz,
    linear_index,
    normalize,
    voxel_coordinates,
)

__all__ = [
    "COORDINATE_CONVENTION",
    "CoordinateDataset",
    "FfNetwork",
    "FourierEncoder",
    "Gradients",
    "MaskVariant",
    "MlpParams",
    "MultiGridVolume",
    "NormalizationParams",
    "PSNR_MAX_DB",
    "QualityReport",
    "SweepSpec",
    "SyntheticSpec",
    "TrainConfig",
    "TrainReport",
    "VariantResult",
    "VoxelMask",
    "backward",
    "build_mask",
    "compression_ratio",
    "compute_avm",
    "denormalize",
    "dilate",
    "encode",
    "epoch_permutation",
    "evaluate",
    "extract_dataset",
    "forward",
    "generate_synthetic",
    "index_to_xyz",
    "init_network",
    "linear_index",
    "normalize",
    "nrmse",
    "param_count",
    "parse_region",
    "psnr",
    "reconstruct_full",
    "region_mean",
    "run_sweep",
    "score",
    "splitmix64",
    "ssim",
    "train",
    "voxel_coordinates",
]
