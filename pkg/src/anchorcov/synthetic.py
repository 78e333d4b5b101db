"""Seeded synthetic annotation corpora with a small-object size distribution.

Object sides (sqrt of area) are log-normal around ``side_median`` so most
mass falls in roughly 20-120 px, the regime where stride limits coverage.
"""
from __future__ import annotations

import math

import numpy as np

from .dataset import Dataset, GroundtruthObject, ImageAnnotation
from .geometry import Box

DEFAULT_CLASSES = ("adidas", "apple", "cocacola", "esso", "fedex", "nvidia", "shell", "starbucks")


def synthetic_dataset(
    n_images: int,
    seed: int = 0,
    width: float = 1000.0,
    height: float = 750.0,
    max_objects: int = 4,
    side_median: float = 50.0,
    side_sigma: float = 0.45,
    side_range: tuple[float, float] = (12.0, 300.0),
    aspect_sigma: float = 0.35,
    classes=DEFAULT_CLASSES,
    allow_overlap: bool = False,
    name: str = "synthetic",
) -> Dataset:
    rng = np.random.default_rng(seed)
    images = []
    for n in range(n_images):
        k = int(rng.integers(1, max_objects + 1))
        boxes: list[Box] = []
        objs = []
        attempts = 0
        while len(objs) < k and attempts < 50 * k:
            attempts += 1
            side = float(np.clip(rng.lognormal(math.log(side_median), side_sigma), *side_range))
            aspect = float(np.exp(rng.normal(0.0, aspect_sigma)))
            w = min(side * math.sqrt(aspect), width - 1)
            h = min(side / math.sqrt(aspect), height - 1)
            x = float(rng.uniform(0, width - w))
            y = float(rng.uniform(0, height - h))
            b = Box(x, y, w, h)
            if not allow_overlap and any(_touching(b, o) for o in boxes):
                continue
            boxes.append(b)
            objs.append(GroundtruthObject(str(classes[int(rng.integers(len(classes)))]), b))
        images.append(ImageAnnotation(f"img{n:05d}", width, height, tuple(objs)))
    return Dataset(name, images)


def _touching(a: Box, b: Box) -> bool:
    return min(a.x2, b.x2) >= max(a.x, b.x) and min(a.y2, b.y2) >= max(a.y, b.y)
