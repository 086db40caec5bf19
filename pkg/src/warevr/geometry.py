"""Planar and 3D geometry helpers shared across the simulator.

World frame is right-handed with Z up; lengths in meters, angles in
radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

Point2 = tuple[float, float]
Vec3 = tuple[float, float, float]


@dataclass(frozen=True)
class Pose3D:
    """A position with a yaw heading (no roll/pitch)."""

    x: float
    y: float
    z: float
    yaw: float = 0.0

    @property
    def xy(self) -> Point2:
        return (self.x, self.y)

    @property
    def xyz(self) -> Vec3:
        return (self.x, self.y, self.z)


def rotate2(v: Point2, angle: float) -> Point2:
    c, s = math.cos(angle), math.sin(angle)
    return (c * v[0] - s * v[1], s * v[0] + c * v[1])


def dist2(a: Point2, b: Point2) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def dist3(a: Vec3, b: Vec3) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


def norm3(v: Vec3) -> float:
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


def clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


def normalize_polygon(points: list[Point2]) -> list[Point2]:
    """Drop an explicit closing vertex if present; polygon edges are implicit."""
    pts = [tuple(p) for p in points]
    if len(pts) >= 2 and pts[0] == pts[-1]:
        pts = pts[:-1]
    return pts


def point_in_polygon(point: Point2, polygon: list[Point2]) -> bool:
    """Even-odd ray cast; points on an edge count as inside."""
    x, y = point
    n = len(polygon)
    inside = False
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        # On-edge check keeps rack footprints touching a wall valid.
        if _on_segment((x, y), (x1, y1), (x2, y2)):
            return True
        if (y1 > y) != (y2 > y):
            t = (y - y1) / (y2 - y1)
            if x < x1 + t * (x2 - x1):
                inside = not inside
    return inside


def _on_segment(p: Point2, a: Point2, b: Point2, eps: float = 1e-9) -> bool:
    cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    if abs(cross) > eps:
        return False
    dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])
    if dot < -eps:
        return False
    return dot <= (b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2 + eps


def segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool:
    """Proper crossing test (shared endpoints do not count)."""

    def orient(a: Point2, b: Point2, c: Point2) -> float:
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def polygon_self_intersects(polygon: list[Point2]) -> bool:
    n = len(polygon)
    for i in range(n):
        a1, a2 = polygon[i], polygon[(i + 1) % n]
        for j in range(i + 1, n):
            # Adjacent edges share a vertex; skip them.
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b1, b2 = polygon[j], polygon[(j + 1) % n]
            if segments_intersect(a1, a2, b1, b2):
                return True
    return False


def polygon_bounds(polygon: list[Point2]) -> tuple[float, float, float, float]:
    xs = [p[0] for p in polygon]
    ys = [p[1] for p in polygon]
    return (min(xs), min(ys), max(xs), max(ys))
