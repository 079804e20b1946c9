"""Patch-wise contrastive losses for binary lesion segmentation.

A training toolkit built around a composite loss: global binary cross
entropy, a patch-wise density contrastive term (lesion-dense vs
lesion-sparse patches), and a patch-wise edge-aware contrastive term
(inner vs outer contour features), combined as

    total = l_sup + alpha * l_pd + beta * l_pe
"""

__version__ = "0.1.0"

from .data import (
    AugmentationConfig,
    PairingError,
    Sample,
    augment,
    export_idrid_layout,
    load_idrid_split,
    make_synthetic_dataset,
)
from .evaluator import (
    MetricsReport,
    binarize,
    compute_metrics,
    evaluate,
)
from .features import MemoryBank, PooledFeature, masked_average_pool
from .losses import (
    ContrastiveConfig,
    LossBreakdown,
    bce_loss,
    density_loss,
    edge_loss,
    supcon_term,
    total_loss,
)
from .morphology import (
    FULL_3X3,
    ContourPair,
    StructuringElement,
    compose_contours,
    dilate,
    erode,
    patch_contours,
)
from .patching import PatchGrid, PatchInfo, partition, patch_view
from .trainer import (
    TrainConfig,
    fit,
    learning_rate_for_epoch,
    load_checkpoint,
    save_checkpoint,
    train_step,
)
from .unet import BackboneSpec, UNet, build_backbone

__all__ = [
    "AugmentationConfig",
    "BackboneSpec",
    "ContourPair",
    "ContrastiveConfig",
    "FULL_3X3",
    "LossBreakdown",
    "MemoryBank",
    "MetricsReport",
    "PairingError",
    "PatchGrid",
    "PatchInfo",
    "PooledFeature",
    "Sample",
    "StructuringElement",
    "TrainConfig",
    "UNet",
    "augment",
    "bce_loss",
    "binarize",
    "build_backbone",
    "compose_contours",
    "compute_metrics",
    "density_loss",
    "dilate",
    "edge_loss",
    "erode",
    "evaluate",
    "export_idrid_layout",
    "fit",
    "learning_rate_for_epoch",
    "load_checkpoint",
    "load_idrid_split",
    "make_synthetic_dataset",
    "masked_average_pool",
    "partition",
    "patch_contours",
    "patch_view",
    "save_checkpoint",
    "supcon_term",
    "total_loss",
    "train_step",
]
