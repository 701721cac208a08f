"""Axis-aligned rectangular obstacles in the world plane."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float
    tall: bool = True  # tall obstacles attenuate and reflect radio as well as block motion

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(f"degenerate rectangle {self}")

    def contains(self, p, margin: float = 0.0) -> bool:
        x, y = p[0], p[1]
        return (self.xmin - margin <= x <= self.xmax + margin) and (self.ymin - margin <= y <= self.ymax + margin)

    def intersects_segment(self, a, b) -> bool:
        """Liang-Barsky clip of segment a-b against the rectangle."""
        x0, y0 = float(a[0]), float(a[1])
        dx, dy = float(b[0]) - x0, float(b[1]) - y0
        t0, t1 = 0.0, 1.0
        for p, q in ((-dx, x0 - self.xmin), (dx, self.xmax - x0), (-dy, y0 - self.ymin), (dy, self.ymax - y0)):
            if p == 0.0:
                if q < 0.0:
                    return False
                continue
            t = q / p
            if p < 0.0:
                t0 = max(t0, t)
            else:
                t1 = min(t1, t)
            if t0 > t1:
                return False
        return True

    def faces(self):
        """Vertical faces as (axis, coordinate, lo, hi, outward_sign)."""
        return (
            ("x", self.xmin, self.ymin, self.ymax, -1.0),
            ("x", self.xmax, self.ymin, self.ymax, +1.0),
            ("y", self.ymin, self.xmin, self.xmax, -1.0),
            ("y", self.ymax, self.xmin, self.xmax, +1.0),
        )


@dataclass(frozen=True)
class ObstacleSet:
    bounds: Rect = field(default_factory=lambda: Rect(0.0, 0.0, 45.0, 45.0))
    rects: tuple[Rect, ...] = ()

    def __post_init__(self):
        b = self.bounds
        for r in self.rects:
            if r.xmin < b.xmin or r.ymin < b.ymin or r.xmax > b.xmax or r.ymax > b.ymax:
                raise ValueError(f"obstacle {r} lies outside the world bounds")

    def in_bounds(self, p) -> bool:
        return self.bounds.contains(p)

    def collides(self, p, margin: float = 0.0) -> bool:
        return any(r.contains(p, margin) for r in self.rects)

    def free(self, p, margin: float = 0.0) -> bool:
        return self.in_bounds(p) and not self.collides(p, margin)

    def segment_free(self, a, b, margin: float = 0.0) -> bool:
        if not (self.in_bounds(a) and self.in_bounds(b)):
            return False
        for r in self.rects:
            grown = Rect(r.xmin - margin, r.ymin - margin, r.xmax + margin, r.ymax + margin) if margin else r
            if grown.intersects_segment(a, b):
                return False
        return True

    def crossings(self, a, b, exclude: Rect | None = None) -> int:
        """Number of tall obstacles the segment passes through."""
        return sum(1 for r in self.rects if r.tall and r is not exclude and r.intersects_segment(a, b))

    @property
    def area(self) -> float:
        b = self.bounds
        return (b.xmax - b.xmin) * (b.ymax - b.ymin)

    def sample_free_point(self, rng: np.random.Generator, margin: float = 0.5, tries: int = 1000) -> np.ndarray:
        b = self.bounds
        for _ in range(tries):
            p = np.array([rng.uniform(b.xmin + margin, b.xmax - margin), rng.uniform(b.ymin + margin, b.ymax - margin), 0.0])
            if not self.collides(p, margin):
                return p
        raise RuntimeError("could not find a free point")
