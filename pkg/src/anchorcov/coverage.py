"""Perfect-classifier coverage: anchor labels, ABO/MABO, recall and size sweeps.

A proposal source (explicit boxes or an anchor grid) is scored by the best
IoU it offers each groundtruth object. Per class the mean of those best
overlaps is the ABO; the MABO is the unweighted mean of ABO over the classes
that actually occur in the groundtruth.
"""
from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .anchors import (
    DEFAULT_BOUNDARIES,
    AnchorGrid,
    AnchorSet,
    FeatureLevel,
    assign_level,
    best_grid_iou,
    best_ideal_iou,
    enumerate_anchors,
)
from .dataset import Dataset, GroundtruthObject, ImageAnnotation, ordered_map
from .geometry import Box, boxes_to_array, check_threshold, iou_matrix

__all__ = [
    "AnchorLabel",
    "CoverageReport",
    "GroundtruthObject",
    "GtResult",
    "SweepCurve",
    "evaluate_boxes",
    "evaluate_grid",
    "label_anchors",
    "size_sweep",
]


class AnchorLabel(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class GtResult:
    image_id: str
    class_name: str
    box: Box
    best_iou: float
    best_box: Box | None


@dataclass(frozen=True)
class CoverageReport:
    per_class: dict[str, tuple[float, int]]
    mabo: float
    recall: float
    iou_threshold: float
    per_gt: tuple[GtResult, ...] = ()

    @property
    def n_gt(self) -> int:
        return sum(n for _, n in self.per_class.values())


@dataclass(frozen=True)
class SweepCurve:
    anchor_scale: float
    points: tuple[tuple[float, float], ...]

    def argmax(self) -> float:
        """Object size at which the curve peaks (first one on ties)."""
        best = max(m for _, m in self.points)
        return next(x for x, m in self.points if m == best)


def label_anchors(grid: AnchorGrid, gts: Sequence[GroundtruthObject], t: float = 0.5) -> Iterator[AnchorLabel]:
    """Label each anchor of ``grid`` (in enumeration order) as positive iff IoU >= t with some gt."""
    t = check_threshold(t)
    gt_arr = boxes_to_array(o.box for o in gts)
    for box, _, _ in enumerate_anchors(grid):
        if len(gt_arr) and iou_matrix(np.array([box.as_tuple()]), gt_arr).max() >= t:
            yield AnchorLabel.POSITIVE
        else:
            yield AnchorLabel.NEGATIVE


def build_report(results: Sequence[GtResult], t: float) -> CoverageReport:
    """Aggregate per-groundtruth best overlaps into a report.

    Means use ``math.fsum`` so the result does not depend on summation order.
    """
    by_class: dict[str, list[float]] = defaultdict(list)
    for r in results:
        by_class[r.class_name].append(r.best_iou)
    per_class = {c: (math.fsum(v) / len(v), len(v)) for c, v in sorted(by_class.items())}
    mabo = math.fsum(a for a, _ in per_class.values()) / len(per_class) if per_class else 0.0
    recall = sum(r.best_iou >= t for r in results) / len(results) if results else 0.0
    return CoverageReport(per_class, mabo, recall, t, tuple(results))


def _evaluate(
    dataset: Dataset,
    best_for_image: Callable[[ImageAnnotation], list[tuple[float, Box | None]]],
    t: float,
    threads: int | None,
) -> CoverageReport:
    t = check_threshold(t)
    images = sorted(dataset.images, key=lambda im: im.image_id)
    per_image = ordered_map(best_for_image, images, threads)
    results = []
    for img, bests in zip(images, per_image):
        for obj, (val, box) in zip(img.objects, bests):
            results.append(GtResult(img.image_id, obj.class_name, obj.box, val, box))
    return build_report(results, t)


def evaluate_boxes(
    dataset: Dataset,
    proposals: Mapping[str, Sequence[Box]],
    t: float = 0.5,
    threads: int | None = 1,
) -> CoverageReport:
    """Score class-agnostic proposal boxes against the dataset's groundtruth.

    Images without proposals contribute best IoU 0 for each object.
    """
    known = {img.image_id for img in dataset.images}
    for image_id in proposals:
        if image_id not in known:
            raise ValueError(f"proposals reference unknown image id {image_id!r}")

    def best(img: ImageAnnotation):
        props = proposals.get(img.image_id, ())
        if not img.objects:
            return []
        if not props:
            return [(0.0, None)] * len(img.objects)
        parr = boxes_to_array(props)
        m = iou_matrix(boxes_to_array(o.box for o in img.objects), parr)
        out = []
        for row in m:
            k = int(np.argmax(row))
            v = float(row[k])
            out.append((v, props[k]) if v > 0 else (0.0, None))
        return out

    return _evaluate(dataset, best, t, threads)


def level_grids_spec(
    anchor_set: AnchorSet,
    strides: Mapping[str, float] | None = None,
    boundaries: tuple[float, float] = DEFAULT_BOUNDARIES,
    flat_stride: float | None = None,
) -> list[tuple[FeatureLevel, tuple]]:
    """Group the anchor set's specs by the feature level (stride) they run on."""
    if flat_stride is not None:
        return [(FeatureLevel("flat", float(flat_stride)), anchor_set.specs())]
    groups: dict[str, list[float]] = {}
    levels: dict[str, FeatureLevel] = {}
    for s in anchor_set.scales:
        lvl = assign_level(s, boundaries, strides)
        levels[lvl.name] = lvl
        groups.setdefault(lvl.name, []).append(s)
    return [(levels[n], anchor_set.specs(groups[n])) for n in sorted(groups, key=lambda n: levels[n].stride)]


def evaluate_grid(
    dataset: Dataset,
    anchor_set: AnchorSet,
    strides: Mapping[str, float] | None = None,
    boundaries: tuple[float, float] = DEFAULT_BOUNDARIES,
    flat_stride: float | None = None,
    t: float = 0.5,
    clip_to_image: bool = False,
    threads: int | None = 1,
) -> CoverageReport:
    """Geometric upper bound on RPN coverage without box regression.

    Every anchor is treated as a proposal. Each scale runs on the stride of
    the level it is assigned to, or on ``flat_stride`` for all scales when
    given.
    """
    layout = level_grids_spec(anchor_set, strides, boundaries, flat_stride)

    def best(img: ImageAnnotation):
        grids = [AnchorGrid(img.width, img.height, lvl, specs, clip_to_image) for lvl, specs in layout]
        out = []
        for obj in img.objects:
            val, box = 0.0, None
            for g in grids:
                v, b = best_grid_iou(obj.box, g)
                if v > val:
                    val, box = v, b
            out.append((val, box))
        return out

    return _evaluate(dataset, best, t, threads)


def evaluate_ideal(
    dataset: Dataset, anchor_set: AnchorSet, t: float = 0.5, threads: int | None = 1
) -> CoverageReport:
    """Stride-free bound: each object scored against every spec at its own center."""
    specs = anchor_set.specs()

    def best(img: ImageAnnotation):
        out = []
        for obj in img.objects:
            val, box = 0.0, None
            cx, cy = obj.box.center
            for spec in specs:
                v = best_ideal_iou(obj.box, spec)
                if v > val:
                    val, box = v, spec.box_at(cx, cy)
            out.append((val, box))
        return out

    return _evaluate(dataset, best, t, threads)


def size_sweep(
    variants: Mapping[float, Dataset],
    anchor_set: AnchorSet,
    mode: str = "ideal",
    strides: Mapping[str, float] | None = None,
    boundaries: tuple[float, float] = DEFAULT_BOUNDARIES,
    flat_stride: float | None = None,
    t: float = 0.5,
    threads: int | None = 1,
) -> list[SweepCurve]:
    """MABO of each object-size variant using one anchor scale at a time.

    ``grid`` mode places the scale on its level's stride; ``ideal`` mode
    uses the concentric placement bound.
    """
    if mode not in ("grid", "ideal"):
        raise ValueError(f"sweep mode must be 'grid' or 'ideal', got {mode!r}")
    if not variants:
        raise ValueError("size sweep needs at least one dataset variant")
    sizes = sorted(variants)
    curves = []
    for s in anchor_set.scales:
        single = AnchorSet((s,), anchor_set.aspects)
        points = []
        for x in sizes:
            if mode == "ideal":
                rep = evaluate_ideal(variants[x], single, t, threads)
            else:
                rep = evaluate_grid(variants[x], single, strides, boundaries, flat_stride, t, threads=threads)
            points.append((float(x), rep.mabo))
        curves.append(SweepCurve(s, tuple(points)))
    return curves
