"""Slow, obviously-correct reference computations used by the test suite."""
from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

from anchorcov.anchors import enumerate_anchors
from anchorcov.geometry import iou

RES = 0.1


def raster_iou(a, b, res: float = RES) -> float:
    """IoU by counting ``res``-sized cells; exact for coordinates on the ``res`` lattice."""
    boxes = [tuple(int(round(v / res)) for v in (bx.x, bx.y, bx.x2, bx.y2)) for bx in (a, b)]
    x0 = min(bx[0] for bx in boxes)
    y0 = min(bx[1] for bx in boxes)
    x1 = max(bx[2] for bx in boxes)
    y1 = max(bx[3] for bx in boxes)
    masks = []
    for bx in boxes:
        m = np.zeros((y1 - y0, x1 - x0), dtype=bool)
        m[bx[1] - y0 : bx[3] - y0, bx[0] - x0 : bx[2] - x0] = True
        masks.append(m)
    inter = np.count_nonzero(masks[0] & masks[1])
    union = np.count_nonzero(masks[0] | masks[1])
    return inter / union


def brute_worst_case(s: float, d: float, step: float = 0.01) -> float:
    """Min IoU of square (0,0,s,s) against (dx,dy,s,s) over a lattice on [0, d/2]^2."""
    n = int(round(d / 2 / step))
    off = np.linspace(0.0, d / 2, n + 1)
    dx, dy = np.meshgrid(off, off, indexing="ij")
    ix = np.clip(np.minimum(s, dx + s) - np.maximum(0.0, dx), 0, None)
    iy = np.clip(np.minimum(s, dy + s) - np.maximum(0.0, dy), 0, None)
    inter = ix * iy
    return float((inter / (s * s + s * s - inter)).min())


def exhaustive_best_grid(gt, grid):
    best, arg = 0.0, None
    for box, _, _ in enumerate_anchors(grid):
        v = iou(gt, box)
        if v > best:
            best, arg = v, box
    return best, arg


def naive_evaluate(dataset, proposals, t):
    """Double loop over gt x proposals; returns (per_class, mabo, recall, per_gt best ious)."""
    per_class = defaultdict(list)
    bests = []
    for img in sorted(dataset.images, key=lambda im: im.image_id):
        for obj in img.objects:
            best = 0.0
            for p in proposals.get(img.image_id, []):
                best = max(best, iou(obj.box, p))
            per_class[obj.class_name].append(best)
            bests.append(best)
    abo = {c: (math.fsum(v) / len(v), len(v)) for c, v in sorted(per_class.items())}
    mabo = math.fsum(a for a, _ in abo.values()) / len(abo) if abo else 0.0
    recall = sum(b >= t for b in bests) / len(bests) if bests else 0.0
    return abo, mabo, recall, bests


def ref_nms(items, threshold):
    order = sorted(range(len(items)), key=lambda i: (-items[i].score, -items[i].box.area, i))
    kept = []
    for i in order:
        if all(iou(items[i].box, items[j].box) < threshold for j in kept):
            kept.append(i)
    return [items[i] for i in kept]
