"""Axis-aligned box representations, conversions, and the IoU metric family.

Boxes are plain floats in either corner form (x_min, y_min, x_max, y_max) or
center form (x_c, y_c, w, h); units are whatever the caller uses (pixels or
normalized), all metrics are scale invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle in corner form."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError(f"degenerate box: {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def to_center(self) -> "CenterBox":
        return CenterBox(
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
            self.width,
            self.height,
        )


@dataclass(frozen=True)
class CenterBox:
    """Axis-aligned rectangle as center point plus width and height."""

    x_c: float
    y_c: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative box size: {self}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_corner(self) -> Box:
        return Box(
            self.x_c - self.w / 2.0,
            self.y_c - self.h / 2.0,
            self.x_c + self.w / 2.0,
            self.y_c + self.h / 2.0,
        )


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes, in [0, 1].

    Returns 0 when the union has zero area (two degenerate boxes), so the
    value is always well defined.
    """
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        inter = 0.0
    else:
        inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _enclosing_sides(a: Box, b: Box) -> tuple[float, float]:
    ew = max(a.x_max, b.x_max) - min(a.x_min, b.x_min)
    eh = max(a.y_max, b.y_max) - min(a.y_min, b.y_min)
    return ew, eh


def giou(a: Box, b: Box) -> float:
    """Generalized IoU: IoU minus the fraction of the smallest enclosing box
    not covered by the union. Range [-1, 1]."""
    ew, eh = _enclosing_sides(a, b)
    c = ew * eh
    if c <= 0.0:
        return iou(a, b)
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = iw * ih if (iw > 0.0 and ih > 0.0) else 0.0
    union = a.area + b.area - inter
    i = inter / union if union > 0.0 else 0.0
    return i - (c - union) / c


def diou(a: Box, b: Box) -> float:
    """Distance IoU: IoU minus squared center distance over squared
    enclosing-box diagonal."""
    ew, eh = _enclosing_sides(a, b)
    c2 = ew * ew + eh * eh
    if c2 <= 0.0:
        return iou(a, b)
    ax = (a.x_min + a.x_max) / 2.0
    ay = (a.y_min + a.y_max) / 2.0
    bx = (b.x_min + b.x_max) / 2.0
    by = (b.y_min + b.y_max) / 2.0
    rho2 = (ax - bx) ** 2 + (ay - by) ** 2
    return iou(a, b) - rho2 / c2


def ciou(a: Box, b: Box) -> float:
    """Complete IoU: DIoU minus an aspect-ratio consistency penalty.

    The penalty weight alpha = v / (1 - IoU + v) is a plain coefficient, not
    differentiated by the loss layer. For a box with zero width or height
    the aspect term v is defined as 0.
    """
    d = diou(a, b)
    aw, ah = a.width, a.height
    bw, bh = b.width, b.height
    if aw <= 0.0 or ah <= 0.0 or bw <= 0.0 or bh <= 0.0:
        return d
    delta = math.atan(bw / bh) - math.atan(aw / ah)
    v = 4.0 / math.pi**2 * delta * delta
    if v == 0.0:
        return d
    alpha = v / (1.0 - iou(a, b) + v)
    return d - alpha * v
