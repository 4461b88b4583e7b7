"""
Camera projection and the box geometry built on it: homogeneous projection
through a ``3 x 4`` matrix, back-projection of a pixel at known depth, the
eight corners of a 3D box, conversion between egocentric and allocentric pose,
and the image rectangle enclosing a projected box.
"""

from __future__ import annotations

__all__ = [
    "BehindCameraError",
    "project_points",
    "project",
    "backproject",
    "rotation_y",
    "corners3d",
    "pose_convert",
    "enclosing_rect",
]

from typing import Any

import jax.numpy as jnp
import numpy as np

from tinylcn.geometry.boxes import (
    CORNER_SIGNS,
    Box2D,
    Box3D,
    Calibration,
    CornerSet,
    viewing_angle,
)
from tinylcn.helpers import JAXArray, wrap_angle


class BehindCameraError(ValueError):
    """Raised when a point projects to a non-positive depth"""


def project_points(calib: Calibration, points: JAXArray) -> tuple[JAXArray, JAXArray]:
    """Project an array of 3D points with shape ``(..., 3)``

    Returns:
        The pixel coordinates with shape ``(..., 2)`` and the homogeneous
        depth with shape ``(...)``. No check is made on the sign of the depth.
    """
    points = jnp.asarray(points, dtype=jnp.float64)
    homogeneous = jnp.concatenate([points, jnp.ones(points.shape[:-1] + (1,))], axis=-1)
    image = homogeneous @ jnp.asarray(calib.P).T
    depth = image[..., 2]
    return image[..., :2] / depth[..., None], depth


def project(calib: Calibration, p3d: Any) -> tuple[float, float, float]:
    """Project a single point, returning ``(u, v, depth)``

    Raises:
        BehindCameraError: If the projected depth is not positive.
    """
    uv, depth = project_points(calib, jnp.asarray(p3d))
    if float(depth) <= 0:
        raise BehindCameraError(f"Point {tuple(np.asarray(p3d))} is behind the camera")
    return float(uv[0]), float(uv[1]), float(depth)


def backproject(calib: Calibration, u: float, v: float, depth: float) -> JAXArray:
    """Invert :func:`project` for a pixel with known homogeneous depth

    This solves ``P[:, :3] @ X = depth * (u, v, 1) - P[:, 3]`` using the
    pseudo-inverse of the left ``3 x 3`` block.
    """
    P = jnp.asarray(calib.P)
    rhs = depth * jnp.array([u, v, 1.0]) - P[:, 3]
    return jnp.linalg.pinv(P[:, :3]) @ rhs


def rotation_y(angle: float) -> JAXArray:
    """The rotation matrix about the camera y-axis"""
    c = jnp.cos(angle)
    s = jnp.sin(angle)
    return jnp.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def corners3d(box: Box3D) -> CornerSet:
    half = 0.5 * jnp.asarray(box.dims)
    local = jnp.asarray(CORNER_SIGNS) * half
    points = local @ rotation_y(box.ry).T + jnp.asarray(box.center)
    return CornerSet(points=points)


def pose_convert(angle: float, center: Any, direction: str = "to_alpha") -> float:
    """Convert between egocentric yaw ``ry`` and allocentric pose ``alpha``

    Args:
        angle: The angle to convert.
        center: The ``(x, y, z)`` object center; the viewing angle is
            ``atan2(x, z)``.
        direction: ``"to_alpha"`` computes ``wrap(ry - theta)`` and
            ``"to_ry"`` computes ``wrap(alpha + theta)``.

    Raises:
        ValueError: If the center lies on the camera plane.
    """
    theta = viewing_angle(center)
    if direction == "to_alpha":
        return wrap_angle(angle - theta)
    if direction == "to_ry":
        return wrap_angle(angle + theta)
    raise ValueError(f"Unknown direction '{direction}'; expected 'to_alpha' or 'to_ry'")


def enclosing_rect(calib: Calibration, box: Box3D) -> Box2D:
    """The smallest axis-aligned rectangle containing the projected corners

    Raises:
        BehindCameraError: If any corner projects to a non-positive depth.
    """
    uv, depth = project_points(calib, corners3d(box).points)
    uv = np.asarray(uv)
    if np.any(np.asarray(depth) <= 0):
        raise BehindCameraError("At least one box corner is behind the camera")
    left, top = uv.min(axis=0)
    right, bottom = uv.max(axis=0)
    return Box2D.from_xyxy(float(left), float(top), float(right), float(bottom))
