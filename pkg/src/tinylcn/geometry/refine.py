"""
Post-hoc refinement of the allocentric pose. The decoded 3D box and the
decoded 2D box are predicted independently, so they rarely agree exactly;
:func:`refine_alpha` nudges ``alpha`` until the projected 3D box best fills
the 2D one.
"""

from __future__ import annotations

__all__ = ["alignment", "refine_alpha"]

import logging

import numpy as np

from tinylcn.geometry.boxes import Box2D, Box3D, Calibration
from tinylcn.geometry.iou import iou2d
from tinylcn.geometry.projection import BehindCameraError, enclosing_rect

logger = logging.getLogger(__name__)


def alignment(box: Box3D, box2d: Box2D, calib: Calibration) -> float:
    """The IoU between the projected rectangle of ``box`` and ``box2d``

    Boxes with a corner behind the camera score ``-1`` so that any valid
    candidate beats them.
    """
    try:
        return iou2d(enclosing_rect(calib, box), box2d)
    except BehindCameraError:
        return -1.0


def refine_alpha(
    box: Box3D,
    box2d: Box2D,
    calib: Calibration,
    steps: int = 8,
    span: float = np.pi / 8,
    max_moves: int = 8,
) -> Box3D:
    """Hill-climb ``alpha`` to maximize :func:`alignment`

    At each of ``steps`` levels both ``alpha + step`` and ``alpha - step`` are
    evaluated and the better one is accepted if it strictly improves the
    objective; this repeats (at most ``max_moves`` times) until neither
    direction helps, then the step is halved. The first step is ``span``.

    Args:
        box: The box to refine; only its pose changes.
        box2d: The target image rectangle.
        calib: The camera calibration.
        steps: The number of step sizes to try.
        span: The initial step size in radians.
        max_moves: The maximum number of accepted moves per step size.

    Returns:
        A copy of ``box`` with the refined ``alpha`` and the matching ``ry``.
        The objective of the result is never lower than that of ``box``.
    """
    if steps < 0 or max_moves < 0:
        raise ValueError("'steps' and 'max_moves' must be non-negative")
    if span <= 0:
        raise ValueError(f"'span' must be positive; got {span}")

    best = box
    best_score = alignment(box, box2d, calib)
    step = float(span)
    for _ in range(steps):
        for _ in range(max_moves):
            candidates = [
                best.with_alpha(best.alpha + step),
                best.with_alpha(best.alpha - step),
            ]
            scores = [alignment(c, box2d, calib) for c in candidates]
            i = int(np.argmax(scores))
            if scores[i] <= best_score:
                break
            best, best_score = candidates[i], scores[i]
        step *= 0.5

    logger.debug(
        "refined alpha %.6f -> %.6f (iou %.6f)", box.alpha, best.alpha, best_score
    )
    return best
