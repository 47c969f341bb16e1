"""Lattice points, discrete balls and boundaries on Z^2."""
from __future__ import annotations

from typing import Iterable, NamedTuple

import numpy as np

NEIGHBOR_OFFSETS = ((1, 0), (0, 1), (-1, 0), (0, -1))


class LatticePoint(NamedTuple):
    x: int
    y: int

    def __add__(self, other):  # type: ignore[override]
        return LatticePoint(self.x + other[0], self.y + other[1])

    def __sub__(self, other):
        return LatticePoint(self.x - other[0], self.y - other[1])

    def __neg__(self):
        return LatticePoint(-self.x, -self.y)

    def norm(self) -> float:
        return float(np.hypot(self.x, self.y))

    def neighbors(self) -> list["LatticePoint"]:
        return [LatticePoint(self.x + dx, self.y + dy) for dx, dy in NEIGHBOR_OFFSETS]


ORIGIN = LatticePoint(0, 0)


def as_point(p) -> LatticePoint:
    x, y = p
    if int(x) != x or int(y) != y:
        raise ValueError(f"non-integer lattice point {p!r}")
    return LatticePoint(int(x), int(y))


def parse_point(text: str) -> LatticePoint:
    """Parse ``"x,y"`` into a lattice point."""
    parts = text.strip().split(",")
    if len(parts) != 2:
        raise ValueError(f"expected 'x,y', got {text!r}")
    return LatticePoint(int(parts[0]), int(parts[1]))


def parse_points(text: str) -> list[LatticePoint]:
    """Parse ``"x1,y1;x2,y2;..."``."""
    return [parse_point(chunk) for chunk in text.split(";") if chunk.strip()]


def ball(radius: float, center=(0, 0)) -> list[LatticePoint]:
    """Lattice points of the Euclidean ball B(center, radius), row-major order."""
    cx, cy = as_point(center)
    r = int(np.floor(radius))
    out = []
    for dx in range(-r, r + 1):
        for dy in range(-r, r + 1):
            if dx * dx + dy * dy <= radius * radius:
                out.append(LatticePoint(cx + dx, cy + dy))
    return out


def internal_boundary(points: Iterable) -> list[LatticePoint]:
    """Points of the set having at least one neighbour outside it."""
    pts = [as_point(p) for p in points]
    members = set(pts)
    return [p for p in pts if any(q not in members for q in p.neighbors())]


def outer_boundary(points: Iterable) -> list[LatticePoint]:
    """Points outside the set adjacent to it, sorted."""
    members = {as_point(p) for p in points}
    out = {q for p in members for q in p.neighbors() if q not in members}
    return sorted(out)


def ball_mask(radius: float, half_width: int | None = None) -> np.ndarray:
    """Boolean mask of B(radius) on the square [-w, w]^2, indexed ``[x + w, y + w]``."""
    w = int(np.floor(radius)) if half_width is None else half_width
    c = np.arange(-w, w + 1)
    return c[:, None] ** 2 + c[None, :] ** 2 <= radius * radius
