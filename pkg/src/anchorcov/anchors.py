"""Anchor sets, strided anchor grids and feature-level assignment."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .geometry import Box, check_stride, check_threshold, concentric_iou, iou_matrix

SCHEMES = ("geometric", "powers_of_two", "explicit")
DEFAULT_ASPECTS = (0.5, 1.0, 2.0)
DEFAULT_BOUNDARIES = (45.0, 90.0)
DEFAULT_STRIDES = {"conv3": 4.0, "conv4": 8.0, "conv5": 16.0}
LEVEL_NAMES = ("conv3", "conv4", "conv5")


@dataclass(frozen=True)
class AnchorSpec:
    scale: float
    aspect: float = 1.0

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"anchor scale must be positive, got {self.scale!r}")
        if not (self.aspect > 0 and math.isfinite(self.aspect)):
            raise ValueError(f"anchor aspect must be positive, got {self.aspect!r}")

    @property
    def shape(self) -> tuple[float, float]:
        """Area-preserving ``(w, h)``: ``w*h == scale**2`` and ``w/h == aspect``."""
        r = math.sqrt(self.aspect)
        return (self.scale * r, self.scale / r)

    def box_at(self, cx: float, cy: float) -> Box:
        w, h = self.shape
        return Box.from_center(cx, cy, w, h)


@dataclass(frozen=True)
class AnchorSet:
    scales: tuple[float, ...]
    aspects: tuple[float, ...] = DEFAULT_ASPECTS
    scheme: str = "explicit"

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(self, "aspects", tuple(float(a) for a in self.aspects))
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown anchor scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.scales:
            raise ValueError("anchor set must contain at least one scale")
        if any(s <= 0 or not math.isfinite(s) for s in self.scales):
            raise ValueError(f"anchor scales must be positive, got {self.scales}")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise ValueError(f"anchor scales must be strictly increasing, got {self.scales}")
        if not self.aspects or any(a <= 0 or not math.isfinite(a) for a in self.aspects):
            raise ValueError(f"anchor aspects must be positive and non-empty, got {self.aspects}")

    def specs(self, scales: Sequence[float] | None = None) -> tuple[AnchorSpec, ...]:
        scales = self.scales if scales is None else scales
        return tuple(AnchorSpec(s, a) for s in scales for a in self.aspects)

    def with_aspects(self, aspects: Sequence[float]) -> AnchorSet:
        return AnchorSet(self.scales, tuple(aspects), self.scheme)

    def format(self) -> str:
        return format_scales(self.scales)


def format_scales(scales: Sequence[float]) -> str:
    out = []
    for s in scales:
        out.append(str(int(s)) if float(s).is_integer() else f"{s:.6f}")
    return ",".join(out)


PRESETS: dict[str, tuple[float, ...]] = {
    "A_paper": (32, 45, 64, 90, 128, 181, 256),
    "A_prop": (32, 45, 64, 90, 128, 256),
    "A_ext": (32, 64, 128, 256),
    "A_orig": (128, 256, 512),
}


def preset(name: str, aspects: Sequence[float] = DEFAULT_ASPECTS) -> AnchorSet:
    try:
        scales = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown anchor preset {name!r}; known: {', '.join(PRESETS)}") from None
    return AnchorSet(scales, tuple(aspects), "explicit")


def parse_anchor_set(text: str, aspects: Sequence[float] = DEFAULT_ASPECTS) -> AnchorSet:
    """Accept a preset name or a comma-separated list of scales."""
    text = text.strip()
    if text in PRESETS:
        return preset(text, aspects)
    try:
        scales = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(
            f"anchor set must be a preset ({', '.join(PRESETS)}) or a comma-separated list, got {text!r}"
        ) from None
    return AnchorSet(tuple(scales), tuple(aspects), "explicit")


def synthesize_anchor_set(
    s_min: float,
    s_max: float,
    t: float = 0.5,
    scheme: str = "geometric",
    aspects: Sequence[float] = DEFAULT_ASPECTS,
) -> AnchorSet:
    """Build an anchor scale set spanning ``[s_min, s_max]``.

    ``geometric`` grows each scale by ``1/sqrt(t)`` so neighbouring scales
    still reach IoU ``t`` on an object matching either one; ``powers_of_two``
    doubles. Scales are floored (with a 1e-9 slack), so 45.25 becomes 45 and
    181.02 becomes 181.
    """
    if scheme not in ("geometric", "powers_of_two"):
        raise ValueError(f"cannot synthesize scheme {scheme!r}; use 'geometric' or 'powers_of_two'")
    if not (0 < s_min <= s_max):
        raise ValueError(f"need 0 < s_min <= s_max, got s_min={s_min!r} s_max={s_max!r}")
    if scheme == "geometric":
        growth = 1.0 / math.sqrt(check_threshold(t))
    else:
        growth = 2.0
    scales = []
    k = 0
    while True:
        raw = s_min * growth**k
        if raw > s_max + 1e-9:
            break
        s = math.floor(raw + 1e-9)
        if s > s_max:
            break
        if s > 0 and (not scales or s > scales[-1]):
            scales.append(float(s))
        k += 1
    if not scales:
        raise ValueError(f"no integer scale in [{s_min}, {s_max}]")
    return AnchorSet(tuple(scales), tuple(aspects), scheme)


@dataclass(frozen=True)
class FeatureLevel:
    name: str
    stride: float

    def __post_init__(self):
        check_stride(self.stride)


def feature_levels(strides: Mapping[str, float] | None = None) -> dict[str, FeatureLevel]:
    strides = dict(DEFAULT_STRIDES if strides is None else strides)
    missing = [n for n in LEVEL_NAMES if n not in strides]
    if missing:
        raise ValueError(f"missing stride for level(s) {missing}")
    ordered = [strides[n] for n in LEVEL_NAMES]
    if any(b <= a for a, b in zip(ordered, ordered[1:])):
        raise ValueError(f"level strides must increase conv3 < conv4 < conv5, got {ordered}")
    return {n: FeatureLevel(n, float(strides[n])) for n in LEVEL_NAMES}


def assign_level(
    scale: float,
    boundaries: tuple[float, float] = DEFAULT_BOUNDARIES,
    strides: Mapping[str, float] | None = None,
) -> FeatureLevel:
    """Map an anchor scale to the feature level whose RPN handles it.

    ``scale <= lo`` goes to conv3, ``lo < scale < hi`` to conv4 and
    ``scale >= hi`` to conv5; the shared endpoints go to the first match.
    """
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale!r}")
    lo, hi = boundaries
    if not lo < hi:
        raise ValueError(f"level boundaries must be increasing, got {boundaries}")
    levels = feature_levels(strides)
    if scale <= lo:
        return levels["conv3"]
    if scale < hi:
        return levels["conv4"]
    return levels["conv5"]


def _n_centers(extent: float, d: float) -> int:
    # count of i >= 0 with (i + 0.5) * d < extent
    n = max(0, math.ceil(extent / d - 0.5))
    while n > 0 and (n - 0.5) * d >= extent:
        n -= 1
    while (n + 0.5) * d < extent:
        n += 1
    return n


@dataclass(frozen=True)
class AnchorGrid:
    width: float
    height: float
    level: FeatureLevel
    specs: tuple[AnchorSpec, ...]
    clip_to_image: bool = False
    nx: int = field(init=False, repr=False)
    ny: int = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"grid extent must be positive, got {self.width}x{self.height}")
        object.__setattr__(self, "specs", tuple(self.specs))
        object.__setattr__(self, "nx", _n_centers(self.width, self.level.stride))
        object.__setattr__(self, "ny", _n_centers(self.height, self.level.stride))

    @property
    def stride(self) -> float:
        return self.level.stride

    @property
    def n_centers(self) -> int:
        return self.nx * self.ny

    def center(self, index: int) -> tuple[float, float]:
        j, i = divmod(index, self.nx)
        d = self.stride
        return ((i + 0.5) * d, (j + 0.5) * d)

    def _clip(self, b: Box) -> Box | None:
        x1, y1 = max(b.x, 0.0), max(b.y, 0.0)
        x2, y2 = min(b.x2, self.width), min(b.y2, self.height)
        if x2 <= x1 or y2 <= y1:
            return None
        return Box(x1, y1, x2 - x1, y2 - y1)

    def anchor(self, index: int, spec: AnchorSpec) -> Box | None:
        b = spec.box_at(*self.center(index))
        return self._clip(b) if self.clip_to_image else b


def enumerate_anchors(grid: AnchorGrid) -> Iterator[tuple[Box, AnchorSpec, int]]:
    """Yield ``(box, spec, center_index)`` in row-major center order."""
    for index in range(grid.n_centers):
        for spec in grid.specs:
            b = grid.anchor(index, spec)
            if b is not None:
                yield b, spec, index


def _candidate_range(center: float, reach: float, d: float, n: int) -> tuple[int, int]:
    # centers (i + 0.5) * d within `reach` of `center`, widened by one cell
    lo = math.floor((center - reach) / d - 0.5) - 1
    hi = math.ceil((center + reach) / d - 0.5) + 1
    return max(lo, 0), min(hi, n - 1)


def best_grid_iou(gt: Box, grid: AnchorGrid) -> tuple[float, Box | None]:
    """Best IoU any anchor of ``grid`` achieves on ``gt``, plus one argmax anchor.

    Only centers within reach of ``gt`` are examined; anchors farther away
    cannot overlap it, so the result equals exhaustive enumeration. Ties go
    to the smallest center index, then to the earlier spec.
    """
    if grid.n_centers == 0 or not grid.specs:
        return 0.0, None
    d = grid.stride
    gcx, gcy = gt.center
    rows = []
    keys = []
    for k, spec in enumerate(grid.specs):
        w, h = spec.shape
        i0, i1 = _candidate_range(gcx, (w + gt.w) / 2 + d, d, grid.nx)
        j0, j1 = _candidate_range(gcy, (h + gt.h) / 2 + d, d, grid.ny)
        if i1 < i0 or j1 < j0:
            continue
        jj, ii = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1), indexing="ij")
        jj, ii = jj.ravel(), ii.ravel()
        cx = (ii + 0.5) * d
        cy = (jj + 0.5) * d
        x = cx - w / 2
        y = cy - h / 2
        arr = np.stack([x, y, np.full_like(x, w), np.full_like(x, h)], axis=1)
        if grid.clip_to_image:
            x1 = np.maximum(arr[:, 0], 0.0)
            y1 = np.maximum(arr[:, 1], 0.0)
            x2 = np.minimum(arr[:, 0] + arr[:, 2], grid.width)
            y2 = np.minimum(arr[:, 1] + arr[:, 3], grid.height)
            keep = (x2 > x1) & (y2 > y1)
            arr = np.stack([x1, y1, x2 - x1, y2 - y1], axis=1)[keep]
            ii, jj = ii[keep], jj[keep]
        rows.append(arr)
        keys.append(np.stack([jj * grid.nx + ii, np.full_like(ii, k)], axis=1))
    if not rows:
        return 0.0, None
    arr = np.concatenate(rows)
    key = np.concatenate(keys)
    if len(arr) == 0:
        return 0.0, None
    vals = iou_matrix(np.array([gt.as_tuple()]), arr)[0]
    best_val = float(vals.max())
    if best_val <= 0.0:
        return 0.0, None
    hits = np.flatnonzero(vals == best_val)
    order = np.lexsort((key[hits, 1], key[hits, 0]))
    pick = hits[order[0]]
    return best_val, Box(*arr[pick])


def best_ideal_iou(gt: Box, spec: AnchorSpec) -> float:
    """Stride-free upper bound: IoU of ``gt`` with the spec's shape at the same center."""
    return concentric_iou((gt.w, gt.h), spec.shape)
