"""Weakly-supervised monocular depth estimation from resolution-mismatched
color/depth pairs: data pipeline, networks, loss stack, metrics, trainer, CLI."""

from .data import (
    ColorImage,
    DepthMap,
    SamplePair,
    SyntheticSceneSpec,
    augment,
    downsample_depth,
    downsample_image,
    generate_synthetic_scene,
    load_sample,
)
from .errors import ConfigError, FormatError, NoValidPixelsError, TrainingDivergedError
from .losses import (
    LossWeights,
    affinity,
    chamfer_bins_loss,
    distill_loss,
    mden_loss,
    net_consistency_loss,
    reconstruction_loss,
    si_loss,
    total_loss,
)
from .metrics import MetricsReport, compute_metrics, garg_crop, mirror_average_predict
from .networks import (
    BinPartition,
    DepthNet,
    FeatureTap,
    NetworkConfig,
    Prediction,
    bin_centers_from_logits,
    depth_from_bins,
    forward_drn,
    forward_mden,
)
from .trainer import TrainingConfig, evaluate, one_cycle_lr, pretrain_drn, train, train_step

__version__ = "0.1.0"
