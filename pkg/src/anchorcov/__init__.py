"""Geometric analysis of anchor design, stride and small-object proposal coverage."""

__version__ = "0.1.0"

from .anchors import (
    AnchorGrid,
    AnchorSet,
    AnchorSpec,
    FeatureLevel,
    assign_level,
    best_grid_iou,
    best_ideal_iou,
    enumerate_anchors,
    preset,
    synthesize_anchor_set,
)
from .coverage import CoverageReport, SweepCurve, evaluate_boxes, evaluate_grid, label_anchors, size_sweep
from .dataset import (
    Dataset,
    GroundtruthObject,
    ImageAnnotation,
    make_test_variants,
    make_train_variant,
    partition_image,
    rescale_to_target,
)
from .geometry import (
    Box,
    aligned_scale_iou,
    concentric_iou,
    iou,
    min_detectable_size,
    next_anchor_scale,
    worst_case_displaced_iou,
)
from .proposals import ScoredBox, hierarchical_merge, nms
