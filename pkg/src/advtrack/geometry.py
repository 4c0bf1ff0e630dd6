"""Axis-aligned boxes and the box metrics used by trackers and evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True)
class BBox:
    """Center-size box in pixel units."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box size must be positive, got w={self.w}, h={self.h}")

    @property
    def corners(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2, self.cy - self.h / 2,
                self.cx + self.w / 2, self.cy + self.h / 2)

    @classmethod
    def from_corners(cls, x0: float, y0: float, x1: float, y1: float) -> "BBox":
        return cls((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)

    def shifted(self, dx: float, dy: float) -> "BBox":
        return BBox(self.cx + dx, self.cy + dy, self.w, self.h)

    def recentered(self, p: Point) -> "BBox":
        return BBox(p.x, p.y, self.w, self.h)

    def to_list(self) -> list[float]:
        return [self.cx, self.cy, self.w, self.h]


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union. Boxes sharing only an edge give 0."""
    ax0, ay0, ax1, ay1 = a.corners
    bx0, by0, bx1, by1 = b.corners
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # corner round-off can push identical boxes a few ulps above 1
    return min(1.0, inter / (a.w * a.h + b.w * b.h - inter))


def center(b: BBox) -> Point:
    return Point(b.cx, b.cy)


def cle(a: BBox, b: BBox) -> float:
    """Center location error: Euclidean distance between box centers."""
    return math.hypot(a.cx - b.cx, a.cy - b.cy)


def point_distance(p: Point, q: Point) -> float:
    return math.hypot(p.x - q.x, p.y - q.y)
