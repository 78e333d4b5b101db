"""Greedy NMS and per-level NMS followed by a merge NMS."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .anchors import LEVEL_NAMES
from .geometry import Box, boxes_to_array, iou_matrix

DEFAULT_NMS_THRESHOLD = 0.7
DEFAULT_TOP_N = 2000


@dataclass(frozen=True)
class ScoredBox:
    box: Box
    score: float
    level: str | None = None

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"score must be finite, got {self.score!r}")


@dataclass(frozen=True)
class ProposalSet:
    image_id: str
    items: tuple[ScoredBox, ...] = ()

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("proposal set needs a non-empty image id")
        object.__setattr__(self, "items", tuple(self.items))

    def boxes(self) -> list[Box]:
        return [it.box for it in self.items]


def _check_threshold(threshold: float) -> float:
    if not 0 < threshold <= 1:
        raise ValueError(f"NMS threshold must satisfy 0 < threshold <= 1, got {threshold!r}")
    return float(threshold)


def rank_order(items: Sequence[ScoredBox]) -> list[int]:
    """Indices by score desc, then area desc, then input position."""
    return sorted(range(len(items)), key=lambda i: (-items[i].score, -items[i].box.area, i))


def nms(items: Sequence[ScoredBox], threshold: float = DEFAULT_NMS_THRESHOLD) -> list[ScoredBox]:
    """Greedy NMS: keep the best remaining box, drop everything with IoU >= threshold to it."""
    threshold = _check_threshold(threshold)
    if not items:
        return []
    order = rank_order(items)
    arr = boxes_to_array(items[i].box for i in order)
    alive = np.ones(len(order), dtype=bool)
    keep = []
    for pos in range(len(order)):
        if not alive[pos]:
            continue
        keep.append(order[pos])
        rest = pos + 1 + np.flatnonzero(alive[pos + 1 :])
        if len(rest):
            ov = iou_matrix(arr[pos : pos + 1], arr[rest])[0]
            alive[rest[ov >= threshold]] = False
    return [items[i] for i in keep]


def _level_key(name: str):
    if name in LEVEL_NAMES:
        return (0, LEVEL_NAMES.index(name), "")
    return (1, 0, name)


def hierarchical_merge(
    per_level: Mapping[str, Sequence[ScoredBox]],
    threshold: float = DEFAULT_NMS_THRESHOLD,
    top_n: int = DEFAULT_TOP_N,
    merge_threshold: float | None = None,
) -> list[ScoredBox]:
    """NMS within each level, then NMS over the concatenated survivors, then keep ``top_n``.

    Levels are concatenated conv3, conv4, conv5, then any other names
    alphabetically. The merge stage reuses ``threshold`` unless
    ``merge_threshold`` is given.
    """
    threshold = _check_threshold(threshold)
    merge_threshold = threshold if merge_threshold is None else _check_threshold(merge_threshold)
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n!r}")
    merged: list[ScoredBox] = []
    for name in sorted(per_level, key=_level_key):
        merged.extend(nms(per_level[name], threshold))
    return nms(merged, merge_threshold)[:top_n]


def group_by_level(items: Sequence[ScoredBox]) -> dict[str, list[ScoredBox]]:
    out: dict[str, list[ScoredBox]] = {}
    for it in items:
        if it.level is None:
            raise ValueError("hierarchical merge needs a level tag on every proposal")
        out.setdefault(it.level, []).append(it)
    return out
