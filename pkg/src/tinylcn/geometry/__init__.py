"""
Camera and box geometry: projection through a ``3 x 4`` calibration matrix,
3D box corners and pose conversion, 2D and rotated 3D overlap, non-maximum
suppression, and pose refinement.
"""

__all__ = [
    "BehindCameraError",
    "Box2D",
    "Box3D",
    "Calibration",
    "CornerSet",
    "DegenerateBoxError",
    "alignment",
    "backproject",
    "corners3d",
    "enclosing_rect",
    "iou2d",
    "iou2d_matrix",
    "iou3d",
    "iou_bev",
    "nms",
    "nms_xyxy",
    "pose_convert",
    "project",
    "project_points",
    "refine_alpha",
    "rotation_y",
    "viewing_angle",
]

from tinylcn.geometry.boxes import Box2D, Box3D, Calibration, CornerSet, viewing_angle
from tinylcn.geometry.iou import DegenerateBoxError, iou2d, iou2d_matrix, iou3d, iou_bev
from tinylcn.geometry.nms import nms, nms_xyxy
from tinylcn.geometry.projection import (
    BehindCameraError,
    backproject,
    corners3d,
    enclosing_rect,
    pose_convert,
    project,
    project_points,
    rotation_y,
)
from tinylcn.geometry.refine import alignment, refine_alpha
