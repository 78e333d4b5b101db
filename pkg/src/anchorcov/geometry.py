"""Box arithmetic and closed-form coverage bounds.

Boxes are real-valued, axis-aligned, given as top-left corner plus size
(``x, y, w, h``) with y growing downward. Every IoU in the package goes
through :func:`iou` or :func:`iou_matrix`, which perform the identical
floating point operations so scalar and vectorized results agree bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            try:
                if isinstance(v, (str, bytes)):
                    raise TypeError
                fv = float(v)
            except (TypeError, ValueError):
                raise ValueError(f"box field {name!r} must be a number, got {v!r}") from None
            if not math.isfinite(fv):
                raise ValueError(f"box field {name!r} must be finite, got {v!r}")
            object.__setattr__(self, name, fv)
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size, got w={self.w!r} h={self.h!r}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return (self.x2 - self.x) * (self.y2 - self.y)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    def side(self) -> float:
        """Square root of the box area."""
        return math.sqrt(self.w * self.h)

    def aspect(self) -> float:
        return self.w / self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def translated(self, dx: float, dy: float) -> Box:
        return Box(self.x + dx, self.y + dy, self.w, self.h)

    def scaled(self, f: float) -> Box:
        return Box(self.x * f, self.y * f, self.w * f, self.h * f)

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> Box:
        return cls(cx - w / 2, cy - h / 2, w, h)


def check_threshold(t: float, name: str = "t") -> float:
    if not (0 < t < 1):
        raise ValueError(f"IoU threshold {name} must satisfy 0 < {name} < 1, got {t!r}")
    return float(t)


def check_stride(d: float) -> float:
    if not (d > 0 and math.isfinite(d)):
        raise ValueError(f"stride must be positive, got {d!r}")
    return float(d)


def iou(a: Box, b: Box) -> float:
    ax2, ay2 = a.x + a.w, a.y + a.h
    bx2, by2 = b.x + b.w, b.y + b.h
    iw = min(ax2, bx2) - max(a.x, b.x)
    ih = min(ay2, by2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - a.x) * (ay2 - a.y) + (bx2 - b.x) * (by2 - b.y) - inter
    return inter / union


def boxes_to_array(boxes) -> np.ndarray:
    """Stack boxes into an ``(n, 4)`` float64 array of ``x, y, w, h``."""
    arr = np.array([b.as_tuple() for b in boxes], dtype=np.float64)
    return arr.reshape(-1, 4)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(n, 4)`` and ``(m, 4)`` xywh arrays.

    Bit-identical to calling :func:`iou` on each pair.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ax1, ay1 = a[:, 0:1], a[:, 1:2]
    ax2, ay2 = ax1 + a[:, 2:3], ay1 + a[:, 3:4]
    bx1, by1 = b[:, 0], b[:, 1]
    bx2, by2 = bx1 + b[:, 2], by1 + b[:, 3]
    iw = np.minimum(ax2, bx2) - np.maximum(ax1, bx1)
    ih = np.minimum(ay2, by2) - np.maximum(ay1, by1)
    hit = (iw > 0) & (ih > 0)
    inter = np.where(hit, iw * ih, 0.0)
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return np.where(hit, inter / union, 0.0)


def aligned_scale_iou(alpha: float) -> float:
    """IoU of a box nested inside an equal-aspect box ``alpha`` times larger."""
    if not alpha >= 1:
        raise ValueError(f"alpha must be >= 1 (anchor is the larger box), got {alpha!r}")
    return 1.0 / (alpha * alpha)


def worst_case_displaced_iou(s_g: float, d: float) -> float:
    """IoU of two equal squares of side ``s_g`` offset by ``d/2`` along both axes.

    This is the best overlap a scale-matched anchor is guaranteed to reach
    on a grid of stride ``d``. Returns 0.0 once ``s_g <= d/2``.
    """
    d = check_stride(d)
    half = d / 2
    if s_g <= half:
        return 0.0
    return (s_g - half) ** 2 / (s_g * s_g + d * s_g - d * d / 4)


def min_detectable_size(d: float, t: float) -> float:
    """Smallest square side whose worst-case displaced IoU still reaches ``t``."""
    d = check_stride(d)
    t = check_threshold(t)
    return (d * (t + 1) + d * math.sqrt(2 * t * (t + 1))) / (2 - 2 * t)


def next_anchor_scale(s: float, t: float) -> float:
    """Largest next scale such that an object matching ``s`` still reaches IoU ``t``."""
    t = check_threshold(t)
    if not s > 0:
        raise ValueError(f"scale must be positive, got {s!r}")
    return s / math.sqrt(t)


def concentric_iou(a: tuple[float, float], b: tuple[float, float]) -> float:
    """IoU of two ``(w, h)`` shapes sharing a center (the best any placement can do)."""
    wa, ha = a
    wb, hb = b
    if min(wa, ha, wb, hb) <= 0:
        raise ValueError("shapes must have positive dimensions")
    inter = min(wa, wb) * min(ha, hb)
    return inter / (wa * ha + wb * hb - inter)
