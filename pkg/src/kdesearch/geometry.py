"""Axis-aligned bounding boxes and overlap scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["BoundingBox", "iou"]


@dataclass(frozen=True)
class BoundingBox:
    """Box given by center (cx, cy) and positive side lengths, in pixels."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for v in (self.cx, self.cy, self.w, self.h):
            if not math.isfinite(v):
                raise ValueError("box fields must be finite")
        if self.w <= 0.0 or self.h <= 0.0:
            raise ValueError("box sides must be positive")

    @property
    def x0(self) -> float:
        return self.cx - 0.5 * self.w

    @property
    def x1(self) -> float:
        return self.cx + 0.5 * self.w

    @property
    def y0(self) -> float:
        return self.cy - 0.5 * self.h

    @property
    def y1(self) -> float:
        return self.cy + 0.5 * self.h

    @property
    def area(self) -> float:
        return self.w * self.h


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 for disjoint boxes, 1 for identical ones."""
    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)
