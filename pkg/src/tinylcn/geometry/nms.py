from __future__ import annotations

__all__ = ["nms", "nms_xyxy"]

from typing import Sequence

import numpy as np

from tinylcn.geometry.boxes import Box2D
from tinylcn.geometry.iou import iou2d_matrix


def nms(dets: Sequence[tuple[Box2D, float]], thresh: float = 0.4) -> list[int]:
    """Greedy non-maximum suppression

    Detections are visited in descending score order, ties broken by the
    lower input index. A detection is dropped if its :func:`iou2d` with any
    already kept detection is strictly greater than ``thresh``.

    Args:
        dets: A sequence of ``(box, score)`` pairs.
        thresh: The overlap threshold.

    Returns:
        The indices of the kept detections, in visiting order.
    """
    if len(dets) == 0:
        return []
    xyxy = np.array([box.xyxy for box, _ in dets], dtype=np.float64)
    scores = np.array([score for _, score in dets], dtype=np.float64)
    return nms_xyxy(xyxy, scores, thresh)


def nms_xyxy(xyxy: np.ndarray, scores: np.ndarray, thresh: float = 0.4) -> list[int]:
    """The array form of :func:`nms` for ``(N, 4)`` corner-form boxes"""
    xyxy = np.asarray(xyxy, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if len(xyxy) != len(scores):
        raise ValueError(f"Got {len(xyxy)} boxes but {len(scores)} scores")
    # A stable sort on the negated scores keeps lower indices first on ties
    order = np.argsort(-scores, kind="stable")
    overlaps = iou2d_matrix(xyxy, xyxy)
    suppressed = np.zeros(len(scores), dtype=bool)
    keep = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(int(i))
        suppressed |= overlaps[i] > thresh
    return keep
