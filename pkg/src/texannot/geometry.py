"""Rectangle overlap, adjacency graphs, connected components, convex hulls.

All predicates use exact integer arithmetic: coordinates are pixel integers,
so there is never a float tolerance to argue about. Overlap means positive
intersection area; shared edges or corners do not connect regions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateHullError, ValidationError
from .imaging import Rect

Point = tuple[int, int]


def rects_overlap(a: Rect, b: Rect) -> bool:
    """True iff the rectangles share positive area (edge contact is not overlap)."""
    return a.x0 < b.x1 and b.x0 < a.x1 and a.y0 < b.y1 and b.y0 < a.y1


@dataclass
class AdjacencyMatrix:
    """Symmetric boolean overlap matrix with a zero diagonal."""

    bits: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.bits, dtype=bool)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"adjacency matrix must be square, got {m.shape}")
        if m.size and (np.any(m != m.T) or np.any(np.diag(m))):
            raise ValidationError("adjacency matrix must be symmetric with zero diagonal")
        self.bits = m

    @property
    def n(self) -> int:
        return self.bits.shape[0]


def build_adjacency(regions: list[Rect]) -> AdjacencyMatrix:
    """Pairwise positive-area overlap matrix over `regions`."""
    n = len(regions)
    bits = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            if rects_overlap(regions[i], regions[j]):
                bits[i, j] = bits[j, i] = True
    return AdjacencyMatrix(bits)


def connected_components(adj: AdjacencyMatrix) -> list[set[int]]:
    """Partition vertex indices into overlap-connected components.

    Components are returned sorted by their smallest member.
    """
    n = adj.n
    seen = [False] * n
    components: list[set[int]] = []
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        comp = {start}
        while stack:
            v = stack.pop()
            for w in np.flatnonzero(adj.bits[v]):
                w = int(w)
                if not seen[w]:
                    seen[w] = True
                    comp.add(w)
                    stack.append(w)
        components.append(comp)
    components.sort(key=min)
    return components


def _cross(o: Point, a: Point, b: Point) -> int:
    # z-component of (a - o) x (b - o); positive = left turn (CCW).
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


@dataclass(frozen=True)
class Polygon:
    """Simple polygon with integer vertices in counter-clockwise order."""

    vertices: tuple[Point, ...]

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise ValidationError("polygon needs at least 3 vertices")
        if len(set(self.vertices)) != len(self.vertices):
            raise ValidationError("polygon has repeated vertices")
        object.__setattr__(self, "vertices", tuple((int(x), int(y)) for x, y in self.vertices))

    def is_strictly_convex(self) -> bool:
        """Every corner is a strict left turn (CCW, no collinear triples)."""
        v = self.vertices
        n = len(v)
        return all(_cross(v[i], v[(i + 1) % n], v[(i + 2) % n]) > 0 for i in range(n))

    def contains_point(self, p: Point) -> bool:
        """Inside-or-on-boundary test for convex CCW polygons (exact)."""
        v = self.vertices
        n = len(v)
        return all(_cross(v[i], v[(i + 1) % n], p) >= 0 for i in range(n))

    def doubled_area(self) -> int:
        """Twice the signed area (positive for CCW)."""
        v = self.vertices
        n = len(v)
        return sum(v[i][0] * v[(i + 1) % n][1] - v[(i + 1) % n][0] * v[i][1] for i in range(n))

    def bounding_rect(self) -> Rect:
        xs = [p[0] for p in self.vertices]
        ys = [p[1] for p in self.vertices]
        return Rect(min(xs), min(ys), max(xs), max(ys))


def convex_hull(points: list[Point]) -> Polygon:
    """Strictly convex CCW hull of integer points (Andrew's monotone chain).

    Collinear boundary points are pruned so hulls compare canonically; the
    first vertex is the lexicographically smallest point.
    """
    pts = sorted(set((int(x), int(y)) for x, y in points))
    if len(pts) < 3:
        raise DegenerateHullError(f"need >= 3 distinct points, got {len(pts)}")

    def half(seq: list[Point]) -> list[Point]:
        out: list[Point] = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateHullError("all points are collinear")
    return Polygon(tuple(hull))


def hull_of_rects(rects: list[Rect]) -> Polygon:
    """Convex hull of all corner points of the given rectangles."""
    corners: list[Point] = []
    for r in rects:
        corners.extend(r.corners())
    return convex_hull(corners)


def polygon_pixel_mask(poly: Polygon, width: int, height: int) -> np.ndarray:
    """Boolean (height, width) mask of pixels whose centers are inside `poly`.

    Pixel (x, y) has center (x + 0.5, y + 0.5); doubling all coordinates keeps
    the inside-or-on test in exact integer arithmetic.
    """
    xs = [p[0] for p in poly.vertices]
    ys = [p[1] for p in poly.vertices]
    x_lo = max(0, min(xs))
    y_lo = max(0, min(ys))
    x_hi = min(width, max(xs))
    y_hi = min(height, max(ys))
    mask = np.zeros((height, width), dtype=bool)
    if x_lo >= x_hi or y_lo >= y_hi:
        return mask
    px = 2 * np.arange(x_lo, x_hi, dtype=np.int64) + 1
    py = 2 * np.arange(y_lo, y_hi, dtype=np.int64) + 1
    inside = np.ones((y_hi - y_lo, x_hi - x_lo), dtype=bool)
    v = [(2 * x, 2 * y) for x, y in poly.vertices]
    n = len(v)
    for i in range(n):
        (ax, ay), (bx, by) = v[i], v[(i + 1) % n]
        # cross(b - a, p - a) >= 0 for every edge of a CCW convex polygon
        inside &= (bx - ax) * (py[:, None] - ay) - (by - ay) * (px[None, :] - ax) >= 0
    mask[y_lo:y_hi, x_lo:x_hi] = inside
    return mask
