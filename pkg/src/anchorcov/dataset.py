"""Annotation containers, recursive single-object partitioning and size variants.

Everything here works on annotation geometry only; pixel data is never read.
"""
from __future__ import annotations

import itertools
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .geometry import Box

log = logging.getLogger(__name__)

TEST_SIZES = tuple(10 * i + 20 for i in range(11))
TRAIN_RANGES = ((20, 60), (40, 80), (60, 100), (80, 120))

# relative slack for "box inside image" after floating point rescaling
_EXTENT_EPS = 1e-9

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Sequence[T], threads: int | None = 1) -> list[R]:
    """Map ``fn`` over ``items``, optionally on a thread pool; output order follows input."""
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class GroundtruthObject:
    class_name: str
    box: Box

    def __post_init__(self):
        if not isinstance(self.class_name, str) or not self.class_name:
            raise ValueError("groundtruth class name must be a non-empty string")


@dataclass(frozen=True)
class Provenance:
    """Where an image came from: ``local = (source - crop offset) * scale``."""

    source_id: str
    crop: tuple[float, float, float, float]
    scale: float = 1.0

    def to_source(self, b: Box) -> Box:
        cx, cy = self.crop[0], self.crop[1]
        f = self.scale
        return Box(b.x / f + cx, b.y / f + cy, b.w / f, b.h / f)


@dataclass(frozen=True)
class ImageAnnotation:
    image_id: str
    width: float
    height: float
    objects: tuple[GroundtruthObject, ...] = ()
    provenance: Provenance | None = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if not isinstance(self.image_id, str) or not self.image_id:
            raise ValueError("image id must be a non-empty string")
        if not (self.width > 0 and self.height > 0 and math.isfinite(self.width) and math.isfinite(self.height)):
            raise ValueError(f"image {self.image_id!r}: extent must be positive, got {self.width}x{self.height}")
        ex = _EXTENT_EPS * max(1.0, self.width)
        ey = _EXTENT_EPS * max(1.0, self.height)
        for k, obj in enumerate(self.objects):
            b = obj.box
            if b.x < -ex or b.y < -ey or b.x2 > self.width + ex or b.y2 > self.height + ey:
                raise ValueError(
                    f"image {self.image_id!r}: object {k} box {b.as_tuple()} lies outside "
                    f"the image extent {self.width}x{self.height}"
                )


@dataclass(frozen=True)
class Dataset:
    name: str
    images: tuple[ImageAnnotation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        seen = set()
        for img in self.images:
            if img.image_id in seen:
                raise ValueError(f"duplicate image id {img.image_id!r} in dataset {self.name!r}")
            seen.add(img.image_id)

    def __len__(self):
        return len(self.images)

    def by_id(self) -> dict[str, ImageAnnotation]:
        return {img.image_id: img for img in self.images}

    def objects(self) -> Iterable[tuple[ImageAnnotation, GroundtruthObject]]:
        for img in self.images:
            for obj in img.objects:
                yield img, obj


# --- partitioning ----------------------------------------------------------


def box_gap(a: Box, b: Box) -> tuple[float, tuple[float, float]]:
    """Closest-point distance between two boxes and the midpoint of a shortest connecting segment.

    Along an axis where the projections overlap, the midpoint of the
    overlapping interval is used.
    """
    if b.x >= a.x2:
        gx, mx = b.x - a.x2, (a.x2 + b.x) / 2
    elif a.x >= b.x2:
        gx, mx = a.x - b.x2, (b.x2 + a.x) / 2
    else:
        gx, mx = 0.0, (max(a.x, b.x) + min(a.x2, b.x2)) / 2
    if b.y >= a.y2:
        gy, my = b.y - a.y2, (a.y2 + b.y) / 2
    elif a.y >= b.y2:
        gy, my = a.y - b.y2, (b.y2 + a.y) / 2
    else:
        gy, my = 0.0, (max(a.y, b.y) + min(a.y2, b.y2)) / 2
    return math.hypot(gx, gy), (mx, my)


def _overlapping(a: Box, b: Box) -> bool:
    return min(a.x2, b.x2) > max(a.x, b.x) and min(a.y2, b.y2) > max(a.y, b.y)


def axes_clear(point: tuple[float, float], boxes: Iterable[Box]) -> bool:
    """True if neither axis line through ``point`` touches any box (distance > 0)."""
    px, py = point
    for b in boxes:
        if b.x <= px <= b.x2 or b.y <= py <= b.y2:
            return False
    return True


def find_split(boxes: Sequence[Box]) -> tuple[tuple[float, float] | None, str]:
    """Pick the split point for a region holding ``boxes``.

    Non-overlapping pairs are tried from the largest gap down (ties by index);
    the first whose split axes clear every box wins. Returns ``(None, reason)``
    with reason ``no-pair`` or ``no-valid-axes`` on failure.
    """
    cands = []
    for i, j in itertools.combinations(range(len(boxes)), 2):
        if _overlapping(boxes[i], boxes[j]):
            continue
        dist, point = box_gap(boxes[i], boxes[j])
        cands.append((-dist, i, j, point))
    if not cands:
        return None, "no-pair"
    cands.sort(key=lambda c: (c[0], c[1], c[2]))
    for _, _, _, point in cands:
        if axes_clear(point, boxes):
            return point, ""
    return None, "no-valid-axes"


@dataclass
class PartitionSummary:
    n_input: int = 0
    n_output: int = 0
    discarded_images: int = 0
    discarded_objects: int = 0
    reasons: Counter = field(default_factory=Counter)
    splits: list = field(default_factory=list)

    def merge(self, other: PartitionSummary) -> None:
        self.n_input += other.n_input
        self.n_output += other.n_output
        self.discarded_images += other.discarded_images
        self.discarded_objects += other.discarded_objects
        self.reasons.update(other.reasons)
        self.splits.extend(other.splits)

    def as_dict(self) -> dict:
        return {
            "input_images": self.n_input,
            "output_images": self.n_output,
            "discarded_images": self.discarded_images,
            "discarded_objects": self.discarded_objects,
            "reasons": dict(sorted(self.reasons.items())),
        }


@dataclass(frozen=True)
class SplitRecord:
    """Split axes used inside one image, in that image's local coordinates."""

    image_id: str
    point: tuple[float, float]
    region: tuple[float, float, float, float]
    objects: tuple[int, ...]


def _crop(img: ImageAnnotation, region, idx: Sequence[int], new_id: str) -> ImageAnnotation:
    rx, ry, rw, rh = region
    objs = tuple(
        GroundtruthObject(img.objects[k].class_name, img.objects[k].box.translated(-rx, -ry)) for k in idx
    )
    prev = img.provenance
    if prev is None:
        prov = Provenance(img.image_id, (rx, ry, rw, rh), 1.0)
    else:
        f = prev.scale
        prov = Provenance(prev.source_id, (prev.crop[0] + rx / f, prev.crop[1] + ry / f, rw / f, rh / f), f)
    return ImageAnnotation(new_id, rw, rh, objs, prov)


def partition_image(
    img: ImageAnnotation, summary: PartitionSummary | None = None
) -> list[ImageAnnotation]:
    """Split an image into single-object images along gaps between objects.

    Regions that hold several objects but admit no valid split are dropped
    with their objects. Emitted images are re-based to their region and
    carry provenance back to the source image.
    """
    local = PartitionSummary(n_input=1)
    if len(img.objects) == 0:
        out = []
        local.discarded_images = 1
        local.reasons["no-objects"] += 1
    elif len(img.objects) == 1:
        out = [img]
    else:
        out = []
        regions = [((0.0, 0.0, img.width, img.height), tuple(range(len(img.objects))))]
        leaves = []
        while regions:
            region, idx = regions.pop(0)
            if len(idx) == 1:
                leaves.append((region, idx))
                continue
            point, reason = find_split([img.objects[k].box for k in idx])
            if point is None:
                local.discarded_objects += len(idx)
                local.reasons[reason] += 1
                continue
            local.splits.append(SplitRecord(img.image_id, point, region, idx))
            rx, ry, rw, rh = region
            px, py = point
            quads = [
                (rx, ry, px - rx, py - ry),
                (px, ry, rx + rw - px, py - ry),
                (rx, py, px - rx, ry + rh - py),
                (px, py, rx + rw - px, ry + rh - py),
            ]
            members = [[], [], [], []]
            for k in idx:
                b = img.objects[k].box
                q = (b.x > px) + 2 * (b.y > py)
                members[q].append(k)
            # depth-first so leaves come out in spatial reading order
            regions[:0] = [(quads[q], tuple(m)) for q, m in enumerate(members) if m]
        for n, (region, idx) in enumerate(leaves):
            out.append(_crop(img, region, idx, f"{img.image_id}#{n}"))
        if not out:
            local.discarded_images = 1
    local.n_output = len(out)
    if summary is not None:
        summary.merge(local)
    return out


def partition_dataset(ds: Dataset, threads: int | None = 1) -> tuple[Dataset, PartitionSummary]:
    def work(img):
        s = PartitionSummary()
        return partition_image(img, s), s

    summary = PartitionSummary()
    images = []
    for out, s in ordered_map(work, ds.images, threads):
        images.extend(out)
        summary.merge(s)
    for reason, n in sorted(summary.reasons.items()):
        log.info("partition of %s: %d region(s) discarded (%s)", ds.name, n, reason)
    return Dataset(ds.name, images), summary


def rescale_to_target(img: ImageAnnotation, target: float) -> ImageAnnotation:
    """Scale a single-object image so the object's side (sqrt of area) equals ``target``."""
    if len(img.objects) != 1:
        raise ValueError(f"image {img.image_id!r}: rescaling needs exactly one object, got {len(img.objects)}")
    if not target > 0:
        raise ValueError(f"target size must be positive, got {target!r}")
    obj = img.objects[0]
    f = target / obj.box.side()
    prev = img.provenance
    if prev is None:
        prov = Provenance(img.image_id, (0.0, 0.0, img.width, img.height), f)
    else:
        prov = replace(prev, scale=prev.scale * f)
    return ImageAnnotation(
        img.image_id,
        img.width * f,
        img.height * f,
        (GroundtruthObject(obj.class_name, obj.box.scaled(f)),),
        prov,
    )


def make_test_variants(
    ds: Dataset,
    sizes: Sequence[float] = TEST_SIZES,
    threads: int | None = 1,
    partitioned: bool = False,
) -> dict[float, Dataset]:
    """One single-object dataset per target size, all built from the same survivors."""
    parts = ds if partitioned else partition_dataset(ds, threads)[0]
    out = {}
    for x in sizes:
        images = ordered_map(lambda img, x=x: rescale_to_target(img, x), parts.images, threads)
        out[x] = Dataset(f"F_test,{_fmt_size(x)}", images)
    return out


def make_train_variant(
    ds: Dataset,
    a: float,
    b: float,
    seed: int = 0,
    threads: int | None = 1,
    partitioned: bool = False,
) -> Dataset:
    """Rescale every survivor to a side drawn uniformly from ``[a, b]``."""
    if not 0 < a < b:
        raise ValueError(f"need 0 < a < b, got a={a!r} b={b!r}")
    parts = ds if partitioned else partition_dataset(ds, threads)[0]
    rng = np.random.default_rng(seed)
    targets = rng.uniform(a, b, size=len(parts.images))
    images = ordered_map(
        lambda pair: rescale_to_target(pair[0], float(pair[1])), list(zip(parts.images, targets)), threads
    )
    return Dataset(f"F_train,{_fmt_size(a)},{_fmt_size(b)}", images)


def _fmt_size(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else f"{x:g}"
