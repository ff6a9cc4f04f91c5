"""Planar primitives and collision predicates.

All coordinates are metres in a local east/north frame. Boundaries are
treated as closed sets: touching shapes overlap, touching segments intersect.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

# chi-square quantile, 2 degrees of freedom, 95 %
CHI2_95_2DOF = -2.0 * math.log(0.05)

DET_EPS = 1e-12
COORD_LIMIT = 1e7


class GeometryError(ValueError):
    pass


class DegenerateCovarianceError(GeometryError):
    pass


class MalformedPolygonError(GeometryError):
    pass


class Point2(NamedTuple):
    x: float
    y: float


class Segment(NamedTuple):
    a: Point2
    b: Point2


@dataclass(frozen=True)
class Cov2:
    sxx: float
    sxy: float
    syy: float

    @property
    def det(self) -> float:
        return self.sxx * self.syy - self.sxy * self.sxy

    def is_psd(self) -> bool:
        return self.sxx >= 0.0 and self.syy >= 0.0 and self.det >= 0.0

    def inverse(self) -> tuple[float, float, float]:
        """Closed-form inverse, returned as (ixx, ixy, iyy)."""
        det = self.det
        if not det >= DET_EPS:
            raise DegenerateCovarianceError(f"covariance determinant {det!r} below {DET_EPS}")
        return self.syy / det, -self.sxy / det, self.sxx / det

    def scaled(self, k: float) -> "Cov2":
        return Cov2(k * self.sxx, k * self.sxy, k * self.syy)

    def eig(self) -> tuple[float, float, float]:
        """Eigenvalues (major, minor) and the major-axis angle in radians from east."""
        half_tr = 0.5 * (self.sxx + self.syy)
        r = math.hypot(0.5 * (self.sxx - self.syy), self.sxy)
        angle = 0.5 * math.atan2(2.0 * self.sxy, self.sxx - self.syy)
        return half_tr + r, half_tr - r, angle


@dataclass(frozen=True)
class UncertaintyEllipse:
    """Level set ``(p - center)^T cov^-1 (p - center) = scale``."""

    center: Point2
    cov: Cov2
    scale: float = CHI2_95_2DOF

    def __post_init__(self):
        if not self.scale > 0:
            raise GeometryError(f"ellipse scale must be positive, got {self.scale}")

    def semi_axes(self) -> tuple[float, float, float]:
        """(semi_major, semi_minor, orientation_rad) of the boundary."""
        l1, l2, angle = self.cov.eig()
        return math.sqrt(self.scale * max(l1, 0.0)), math.sqrt(self.scale * max(l2, 0.0)), angle

    def area(self) -> float:
        a, b, _ = self.semi_axes()
        return math.pi * a * b


class ConvexPolygon:
    """Strictly convex polygon with counterclockwise vertices (3..255 of them)."""

    __slots__ = ("vertices",)

    def __init__(self, vertices: Sequence[Sequence[float]]):
        verts = tuple(Point2(float(v[0]), float(v[1])) for v in vertices)
        _check_convex(verts)
        self.vertices = verts

    def __len__(self) -> int:
        return len(self.vertices)

    def __iter__(self):
        return iter(self.vertices)

    def __repr__(self) -> str:
        return f"ConvexPolygon({list(self.vertices)!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, ConvexPolygon) and self.vertices == other.vertices

    def area(self) -> float:
        v = self.vertices
        n = len(v)
        return 0.5 * sum(v[i].x * v[(i + 1) % n].y - v[(i + 1) % n].x * v[i].y for i in range(n))

    def edges(self):
        v = self.vertices
        n = len(v)
        for i in range(n):
            yield v[i], v[(i + 1) % n]


def _check_convex(verts: tuple[Point2, ...]) -> None:
    n = len(verts)
    if not 3 <= n <= 255:
        raise MalformedPolygonError(f"polygon needs 3..255 vertices, got {n}")
    for p in verts:
        if not (math.isfinite(p.x) and math.isfinite(p.y)):
            raise MalformedPolygonError(f"non-finite vertex {p}")
        if abs(p.x) >= COORD_LIMIT or abs(p.y) >= COORD_LIMIT:
            raise MalformedPolygonError(f"vertex {p} outside coordinate range")
    if len(set(verts)) != n:
        raise MalformedPolygonError("repeated vertex")
    for i in range(n):
        a, b, c = verts[i], verts[(i + 1) % n], verts[(i + 2) % n]
        if _cross(a, b, c) <= 0.0:
            raise MalformedPolygonError(f"not strictly convex/counterclockwise at vertex {(i + 1) % n}")


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def mahalanobis_sq(p: Sequence[float], e: UncertaintyEllipse) -> float:
    """Squared Mahalanobis distance of ``p`` from the ellipse centre under ``e.cov``."""
    ixx, ixy, iyy = e.cov.inverse()
    dx = p[0] - e.center[0]
    dy = p[1] - e.center[1]
    return max(ixx * dx * dx + 2.0 * ixy * dx * dy + iyy * dy * dy, 0.0)


def ellipse_overlap(
    e1: UncertaintyEllipse,
    e2: UncertaintyEllipse,
    mode: str = "combined",
    counter: Optional[Counter] = None,
) -> bool:
    """Overlap test between two uncertainty ellipses.

    ``mode="combined"`` tests the centre offset against the summed scaled
    covariances, ``d^T (s1*C1 + s2*C2)^-1 d <= 1``. ``mode="center"`` reports
    overlap when either centre lies inside the other ellipse.
    """
    if counter is not None:
        counter["ellipse_tests"] += 1
    if mode == "combined":
        c = Cov2(
            e1.scale * e1.cov.sxx + e2.scale * e2.cov.sxx,
            e1.scale * e1.cov.sxy + e2.scale * e2.cov.sxy,
            e1.scale * e1.cov.syy + e2.scale * e2.cov.syy,
        )
        # both operands must be valid on their own
        e1.cov.inverse()
        e2.cov.inverse()
        return mahalanobis_sq(e1.center, UncertaintyEllipse(e2.center, c, 1.0)) <= 1.0
    if mode == "center":
        return mahalanobis_sq(e2.center, e1) <= e1.scale or mahalanobis_sq(e1.center, e2) <= e2.scale
    raise ValueError(f"unknown ellipse overlap mode {mode!r}")


def _project(verts, ax: float, ay: float) -> tuple[float, float]:
    lo = hi = verts[0][0] * ax + verts[0][1] * ay
    for v in verts[1:]:
        d = v[0] * ax + v[1] * ay
        if d < lo:
            lo = d
        elif d > hi:
            hi = d
    return lo, hi


def sat_overlap(p1: ConvexPolygon, p2: ConvexPolygon, counter: Optional[Counter] = None) -> bool:
    """Separating Axis Theorem test on the edge normals of both polygons."""
    if not isinstance(p1, ConvexPolygon) or not isinstance(p2, ConvexPolygon):
        raise MalformedPolygonError("sat_overlap expects ConvexPolygon operands")
    v1, v2 = p1.vertices, p2.vertices
    for poly in (v1, v2):
        n = len(poly)
        for i in range(n):
            a, b = poly[i], poly[(i + 1) % n]
            ax, ay = b[1] - a[1], a[0] - b[0]
            if counter is not None:
                counter["sat_axis_tests"] += 1
            lo1, hi1 = _project(v1, ax, ay)
            lo2, hi2 = _project(v2, ax, ay)
            if hi1 < lo2 or hi2 < lo1:
                return False
    return True


def _on_segment(p, q, r) -> bool:
    # q collinear with p-r; is q inside the bounding box of p-r?
    return min(p[0], r[0]) <= q[0] <= max(p[0], r[0]) and min(p[1], r[1]) <= q[1] <= max(p[1], r[1])


def segments_intersect(s1: Segment, s2: Segment) -> bool:
    """Orientation-based closed segment intersection; collinear overlap counts."""
    p1, q1 = s1
    p2, q2 = s2
    o1 = _cross(p1, q1, p2)
    o2 = _cross(p1, q1, q2)
    o3 = _cross(p2, q2, p1)
    o4 = _cross(p2, q2, q1)
    if ((o1 > 0 and o2 < 0) or (o1 < 0 and o2 > 0)) and ((o3 > 0 and o4 < 0) or (o3 < 0 and o4 > 0)):
        return True
    if o1 == 0 and _on_segment(p1, p2, q1):
        return True
    if o2 == 0 and _on_segment(p1, q2, q1):
        return True
    if o3 == 0 and _on_segment(p2, p1, q2):
        return True
    if o4 == 0 and _on_segment(p2, q1, q2):
        return True
    return False


def trajectories_collide(
    t1: Sequence[Sequence[float]],
    t2: Sequence[Sequence[float]],
    counter: Optional[Counter] = None,
) -> bool:
    """True iff any segment of polyline ``t1`` meets any segment of ``t2``.

    Every segment pair is tested, with no pruning and no early exit.
    """
    if len(t1) < 2 or len(t2) < 2:
        raise GeometryError("polylines need at least 2 points")
    segs1 = [Segment(t1[i], t1[i + 1]) for i in range(len(t1) - 1)]
    segs2 = [Segment(t2[i], t2[i + 1]) for i in range(len(t2) - 1)]
    hit = False
    for s in segs1:
        for r in segs2:
            if segments_intersect(s, r):
                hit = True
    if counter is not None:
        counter["segment_tests"] += len(segs1) * len(segs2)
    return hit
