"""
Overlap measures. :func:`iou2d` works on axis-aligned image rectangles;
:func:`iou_bev` and :func:`iou3d` intersect the rotated bird's-eye-view
footprints of two 3D boxes by convex polygon clipping, the latter also
multiplying by the overlap of the vertical extents ``[y - h, y]``.
"""

from __future__ import annotations

__all__ = [
    "DegenerateBoxError",
    "iou2d",
    "iou2d_matrix",
    "bev_polygon",
    "clip_polygon",
    "polygon_area",
    "iou_bev",
    "iou3d",
]

import numpy as np

from tinylcn.geometry.boxes import Box2D, Box3D
from tinylcn.geometry.projection import corners3d

_EPS = 1e-12


class DegenerateBoxError(ValueError):
    """Raised when a box footprint has zero area"""


def iou2d(a: Box2D, b: Box2D) -> float:
    return float(iou2d_matrix(np.array([a.xyxy]), np.array([b.xyxy]))[0, 0])


def iou2d_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two sets of ``(left, top, right, bottom)`` boxes

    Args:
        a: An array with shape ``(N, 4)``.
        b: An array with shape ``(M, 4)``.

    Returns:
        An ``(N, M)`` array of overlaps in ``[0, 1]``.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    left = np.maximum(a[:, None, 0], b[None, :, 0])
    top = np.maximum(a[:, None, 1], b[None, :, 1])
    right = np.minimum(a[:, None, 2], b[None, :, 2])
    bottom = np.minimum(a[:, None, 3], b[None, :, 3])
    inter = np.clip(right - left, 0, None) * np.clip(bottom - top, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    return np.clip(iou, 0.0, 1.0)


def polygon_area(points: np.ndarray) -> float:
    """The signed shoelace area; positive for counter-clockwise vertices"""
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 3:
        return 0.0
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def bev_polygon(box: Box3D) -> np.ndarray:
    """The counter-clockwise ``(x, z)`` footprint of a box, shape ``(4, 2)``"""
    footprint = np.asarray(corners3d(box).points)[:4][:, [0, 2]]
    if polygon_area(footprint) < 0:
        footprint = footprint[::-1]
    return footprint


def clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Clip a polygon against a convex counter-clockwise polygon

    This is the Sutherland-Hodgman algorithm; points on a clip edge count as
    inside so that coincident polygons clip to themselves.

    Returns:
        The vertices of the intersection, possibly with fewer than three rows
        if the polygons do not overlap.
    """
    output = [np.asarray(p, dtype=np.float64) for p in subject]
    clip = np.asarray(clip, dtype=np.float64)
    for i in range(len(clip)):
        if not output:
            break
        start, end = clip[i], clip[(i + 1) % len(clip)]
        edge = end - start

        def side(
            p: np.ndarray, start: np.ndarray = start, edge: np.ndarray = edge
        ) -> float:
            return float(edge[0] * (p[1] - start[1]) - edge[1] * (p[0] - start[0]))

        current, output = output, []
        prev = current[-1]
        prev_side = side(prev)
        for point in current:
            point_side = side(point)
            if point_side >= -_EPS:
                if prev_side < -_EPS:
                    output.append(_crossing(prev, point, prev_side, point_side))
                output.append(point)
            elif prev_side >= -_EPS:
                output.append(_crossing(prev, point, prev_side, point_side))
            prev, prev_side = point, point_side
    return np.array(output).reshape(-1, 2)


def _crossing(p: np.ndarray, q: np.ndarray, side_p: float, side_q: float) -> np.ndarray:
    t = side_p / (side_p - side_q)
    return p + t * (q - p)


def _footprints(a: Box3D, b: Box3D) -> tuple[float, float, float]:
    poly_a = bev_polygon(a)
    poly_b = bev_polygon(b)
    area_a = polygon_area(poly_a)
    area_b = polygon_area(poly_b)
    if area_a <= _EPS or area_b <= _EPS:
        raise DegenerateBoxError("Cannot compute the overlap of a zero-area footprint")
    inter = clip_polygon(poly_a, poly_b)
    return area_a, area_b, max(polygon_area(inter), 0.0)


def iou_bev(a: Box3D, b: Box3D) -> float:
    """The overlap of the rotated bird's-eye-view footprints"""
    area_a, area_b, inter = _footprints(a, b)
    return float(np.clip(inter / (area_a + area_b - inter), 0.0, 1.0))


def iou3d(a: Box3D, b: Box3D) -> float:
    """The volumetric overlap of two yaw-rotated boxes

    Raises:
        DegenerateBoxError: If either footprint has zero area.
    """
    area_a, area_b, inter_area = _footprints(a, b)
    ya, ha = float(a.center[1]), float(a.dims[1])
    yb, hb = float(b.center[1]), float(b.dims[1])
    overlap = max(0.0, min(ya, yb) - max(ya - ha, yb - hb))
    inter = inter_area * overlap
    union = area_a * ha + area_b * hb - inter
    return float(np.clip(inter / union, 0.0, 1.0))
