from __future__ import annotations

__all__ = [
    "Calibration",
    "Box2D",
    "Box3D",
    "CornerSet",
    "CORNER_SIGNS",
    "viewing_angle",
]

from typing import Any

import jax.numpy as jnp
import numpy as np

from tinylcn.helpers import JAXArray, dataclass, field, wrap_angle


@dataclass
class Calibration:
    """A camera projection matrix

    Args:
        P: The ``(3, 4)`` projection matrix mapping homogeneous camera
            coordinates to homogeneous pixel coordinates.
    """

    P: JAXArray

    def __post_init__(self) -> None:
        if jnp.shape(self.P) != (3, 4):
            raise ValueError(
                f"The projection matrix must be 3x4; got {jnp.shape(self.P)}"
            )

    @classmethod
    def from_values(cls, values: Any) -> Calibration:
        """Build a calibration from 12 row-major values

        The matrix is rescaled so that ``P[2, 2] == 1``.
        """
        P = np.asarray(values, dtype=np.float64).reshape(3, 4)
        if P[2, 2] == 0:
            raise ValueError("P[2, 2] must be non-zero")
        P = P / P[2, 2]
        if P[0, 0] <= 0 or P[1, 1] <= 0:
            raise ValueError(
                f"Focal lengths must be positive; got {P[0, 0]}, {P[1, 1]}"
            )
        return cls(P=jnp.asarray(P))

    @property
    def focal(self) -> tuple[float, float]:
        return float(self.P[0, 0]), float(self.P[1, 1])

    @property
    def principal_point(self) -> tuple[float, float]:
        return float(self.P[0, 2]), float(self.P[1, 2])


@dataclass
class Box2D:
    """An axis-aligned image rectangle in center/size form, in pixels"""

    cx: float
    cy: float
    w: float
    h: float

    @classmethod
    def from_xyxy(cls, left: float, top: float, right: float, bottom: float) -> Box2D:
        return cls(
            cx=0.5 * (left + right),
            cy=0.5 * (top + bottom),
            w=right - left,
            h=bottom - top,
        )

    @property
    def xyxy(self) -> tuple[float, float, float, float]:
        return (
            self.cx - 0.5 * self.w,
            self.cy - 0.5 * self.h,
            self.cx + 0.5 * self.w,
            self.cy + 0.5 * self.h,
        )

    @property
    def area(self) -> float:
        return self.w * self.h


def viewing_angle(center: Any) -> float:
    """The angle ``atan2(x, z)`` between the optical axis and an object center"""
    x, _, z = (float(v) for v in np.asarray(center))
    if z == 0:
        raise ValueError("The object center lies on the camera plane (z = 0)")
    return float(np.arctan2(x, z))


@dataclass
class Box3D:
    """A 3D box in camera coordinates

    You'll usually build boxes with :func:`Box3D.create`, which fills in
    whichever of the two pose angles is missing.

    Args:
        center: The ``(x, y, z)`` location in meters. ``y`` is the bottom of
            the box (the ground contact point).
        dims: The ``(w, h, l)`` size in meters, along the box's local x, y
            and z axes respectively.
        ry: The egocentric yaw around the camera y-axis, in radians.
        alpha: The allocentric pose, ``wrap(ry - atan2(x, z))``.
        score: A detection confidence in ``[0, 1]``.
        class_id: An integer class label.
    """

    center: JAXArray
    dims: JAXArray
    ry: float
    alpha: float
    score: float = 1.0
    class_id: int = field(pytree_node=False, default=0)

    @classmethod
    def create(
        cls,
        center: Any,
        dims: Any,
        *,
        ry: float | None = None,
        alpha: float | None = None,
        score: float = 1.0,
        class_id: int = 0,
    ) -> Box3D:
        center = np.asarray(center, dtype=np.float64).reshape(3)
        dims = np.asarray(dims, dtype=np.float64).reshape(3)
        if np.any(dims <= 0):
            raise ValueError(f"Box dimensions must be positive; got {dims}")
        if (ry is None) == (alpha is None):
            raise ValueError("Exactly one of 'ry' and 'alpha' must be provided")
        theta = viewing_angle(center)
        if ry is None:
            assert alpha is not None
            alpha = wrap_angle(alpha)
            ry = wrap_angle(alpha + theta)
        else:
            ry = wrap_angle(ry)
            alpha = wrap_angle(ry - theta)
        return cls(
            center=center,
            dims=dims,
            ry=float(ry),
            alpha=float(alpha),
            score=float(score),
            class_id=int(class_id),
        )

    def with_alpha(self, alpha: float) -> Box3D:
        """A copy with a new allocentric pose; ``ry`` follows"""
        return Box3D.create(
            self.center,
            self.dims,
            alpha=alpha,
            score=self.score,
            class_id=self.class_id,
        )

    def with_ry(self, ry: float) -> Box3D:
        return Box3D.create(
            self.center, self.dims, ry=ry, score=self.score, class_id=self.class_id
        )

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.dims)))


@dataclass
class CornerSet:
    """The eight corners of a :class:`Box3D`

    Corner ``m`` is ``R_y(ry) @ (s_x w/2, s_y h/2, s_z l/2) + center`` with the
    sign pattern ``(s_x, s_y, s_z)`` taken from :data:`CORNER_SIGNS`: the
    first four corners have ``s_y = +1`` (the face at larger ``y``), the last
    four ``s_y = -1``, each face walked in the same rotational order.

    Args:
        points: An ``(8, 3)`` array of corner coordinates in meters.
    """

    points: JAXArray


CORNER_SIGNS = np.array(
    [
        [+1, +1, +1],
        [+1, +1, -1],
        [-1, +1, -1],
        [-1, +1, +1],
        [+1, -1, +1],
        [+1, -1, -1],
        [-1, -1, -1],
        [-1, -1, +1],
    ],
    dtype=np.float64,
)
