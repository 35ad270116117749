"""Integer-nanometre polygon kernel.

Boolean operations run through Clipper (``pyclipper``) on 1 nm integer
coordinates so that clipped layouts are exactly reproducible.  Polygons are
tuples of ``(x, y)`` integer pairs without a repeated closing vertex.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np
import pyclipper

from .errors import GeometryError

NM_PER_UM = 1000

Point = tuple[int, int]
Polygon = tuple[Point, ...]

# Half-plane extent used when cutting holes open; far beyond any chip.
_FAR = 2**40


def snap(points_um: Iterable[Sequence[float]]) -> Polygon:
    """Round µm coordinates onto the 1 nm grid."""
    return tuple((round(x * NM_PER_UM), round(y * NM_PER_UM)) for x, y in points_um)


def to_um(poly: Polygon) -> list[tuple[float, float]]:
    return [(x / NM_PER_UM, y / NM_PER_UM) for x, y in poly]


def signed_area2(poly: Polygon) -> int:
    """Twice the signed area (positive for counter-clockwise), exact."""
    n = len(poly)
    return sum(
        poly[i][0] * poly[(i + 1) % n][1] - poly[(i + 1) % n][0] * poly[i][1]
        for i in range(n)
    )


def area_nm2(poly: Polygon) -> float:
    return abs(signed_area2(poly)) / 2


def area_um2(poly: Polygon) -> float:
    return area_nm2(poly) / NM_PER_UM**2


def normalize(poly: Sequence[Sequence[int]]) -> Polygon:
    """Counter-clockwise, starting at the lowest-leftmost vertex."""
    pts = [(int(x), int(y)) for x, y in poly]
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts.pop()
    if signed_area2(tuple(pts)) < 0:
        pts.reverse()
    start = min(range(len(pts)), key=lambda i: (pts[i][1], pts[i][0]))
    return tuple(pts[start:] + pts[:start])


def bbox(poly: Polygon) -> tuple[int, int, int, int]:
    xs = [p[0] for p in poly]
    ys = [p[1] for p in poly]
    return min(xs), min(ys), max(xs), max(ys)


def _run(subjects, clips, op, tree=False):
    pc = pyclipper.Pyclipper()
    pc.StrictlySimple = True
    subjects = [s for s in subjects if len(s) >= 3]
    if not subjects:
        return None if tree else []
    pc.AddPaths(subjects, pyclipper.PT_SUBJECT, True)
    if clips:
        pc.AddPaths(clips, pyclipper.PT_CLIP, True)
    if tree:
        return pc.Execute2(op, pyclipper.PFT_NONZERO, pyclipper.PFT_NONZERO)
    return pc.Execute(op, pyclipper.PFT_NONZERO, pyclipper.PFT_NONZERO)


def _outers_with_holes(node) -> list[tuple[list, list]]:
    out = []
    stack = list(node.Childs)
    while stack:
        child = stack.pop()
        if child.IsHole:
            continue
        holes = [h.Contour for h in child.Childs if h.IsHole]
        out.append((child.Contour, holes))
        for h in child.Childs:
            stack.extend(h.Childs)
    return out


def _fracture(outer, holes) -> list[Polygon]:
    """Split a polygon with holes into hole-free pieces.

    Each pass cuts along a vertical (or horizontal) line through the interior
    of the first hole, which opens that hole into the boundary of both halves.
    """
    if not holes:
        return [normalize(outer)]
    hx0, hy0, hx1, hy1 = bbox(tuple(map(tuple, holes[0])))
    paths = [outer] + holes
    if hx1 - hx0 >= 2:
        cut = (hx0 + hx1) // 2
        halves = [
            [(-_FAR, -_FAR), (cut, -_FAR), (cut, _FAR), (-_FAR, _FAR)],
            [(cut, -_FAR), (_FAR, -_FAR), (_FAR, _FAR), (cut, _FAR)],
        ]
    elif hy1 - hy0 >= 2:
        cut = (hy0 + hy1) // 2
        halves = [
            [(-_FAR, -_FAR), (_FAR, -_FAR), (_FAR, cut), (-_FAR, cut)],
            [(-_FAR, cut), (_FAR, cut), (_FAR, _FAR), (-_FAR, _FAR)],
        ]
    else:
        raise GeometryError("hole narrower than 2 nm cannot be fractured")
    pieces = []
    for half in halves:
        node = _run(paths, [half], pyclipper.CT_INTERSECTION, tree=True)
        if node is None:
            continue
        for o, hs in _outers_with_holes(node):
            pieces.extend(_fracture(o, hs))
    return pieces


def _tree_to_polygons(node) -> list[Polygon]:
    if node is None:
        return []
    pieces = []
    for outer, holes in _outers_with_holes(node):
        pieces.extend(_fracture(outer, holes))
    return sorted(p for p in pieces if signed_area2(p) != 0)


def intersection(subjects: Sequence[Polygon], clip: Polygon) -> list[Polygon]:
    """Hole-free simple polygons covering ``union(subjects) ∩ clip``."""
    node = _run(list(subjects), [clip], pyclipper.CT_INTERSECTION, tree=True)
    return _tree_to_polygons(node)


def difference(subjects: Sequence[Polygon], clip: Polygon) -> list[Polygon]:
    """Raw Clipper paths of ``union(subjects) − clip``.

    Holes come back clockwise, so the result can be fed straight back in as
    subjects under the non-zero fill rule.
    """
    return [tuple(map(tuple, p)) for p in _run(list(subjects), [clip], pyclipper.CT_DIFFERENCE)]


def flatten(subjects: Sequence[Polygon]) -> list[Polygon]:
    """Resolve a non-zero path set into hole-free simple polygons."""
    node = _run(list(subjects), [], pyclipper.CT_UNION, tree=True)
    return _tree_to_polygons(node)


def paths_area_nm2(paths: Sequence[Polygon]) -> float:
    """Net area of a non-zero path set with oriented holes."""
    return sum(signed_area2(p) for p in paths) / 2


def is_simple(poly: Sequence[Sequence[float]]) -> bool:
    """True if no two non-adjacent edges touch (O(n^2), fine for mask shapes)."""
    pts = [tuple(p) for p in poly]
    n = len(pts)
    if n < 3:
        return False

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(
            a[1], b[1]
        )

    def cross(p1, p2, p3, p4):
        d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
        d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
        if d1 != d2 and d3 != d4:
            return True
        return (
            (d1 == 0 and on_seg(p3, p4, p1))
            or (d2 == 0 and on_seg(p3, p4, p2))
            or (d3 == 0 and on_seg(p1, p2, p3))
            or (d4 == 0 and on_seg(p1, p2, p4))
        )

    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if cross(a, b, pts[j], pts[(j + 1) % n]):
                return False
    return True


def points_in_polygon(xs: np.ndarray, ys: np.ndarray, poly_um) -> np.ndarray:
    """Even-odd containment of sample points, half-open on edges.

    A point on a shared edge belongs to exactly one of the two polygons on
    either side, which keeps rasterized tilings gap- and overlap-free.
    """
    poly = np.asarray(poly_um, dtype=float)
    inside = np.zeros(np.broadcast(xs, ys).shape, dtype=bool)
    x1, y1 = poly[:, 0], poly[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    for ax, ay, bx, by in zip(x1, y1, x2, y2):
        if ay == by:
            continue
        straddles = (ay > ys) != (by > ys)
        x_cross = ax + (ys - ay) * (bx - ax) / (by - ay)
        inside ^= straddles & (xs < x_cross)
    return inside


def rotate_translate(points, angle_deg: float, origin) -> list[tuple[float, float]]:
    """Rotate local (u, v) points by ``angle_deg`` then shift to ``origin``."""
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    # Exact quarter turns keep axis-aligned bridges on the integer grid.
    if angle_deg % 90 == 0:
        c, s = round(c), round(s)
    ox, oy = origin
    return [(ox + c * u - s * v, oy + s * u + c * v) for u, v in points]
