r"""
The transformation between network outputs and boxes. For every anchor at
every output cell the detection head predicts a vector of ``35 + n_c``
numbers laid out as

=========  =====  ===========================================================
field      size   meaning
=========  =====  ===========================================================
``t2d``    4      2D box ``(tx, ty, tw, th)``
``tP``     2      projected 3D center ``(tx, ty)``
``t3d``    5      depth, 3D size and pose ``(tz, tw, th, tl, talpha)``
``tC``     24     eight projected corners, ``(tx, ty, tz)`` each
``scores`` n_c    class scores; index 0 is the background
=========  =====  ===========================================================

and decoded against an anchor by

.. math::

    x' = A_x + t_x A_w, \quad w' = A_w e^{t_w}, \quad z' = A_z + t_z,
    \quad \alpha' = A_\alpha + t_\alpha

with the same pattern for the remaining fields. The 3D center is recovered by
back-projecting the projected center at depth ``z'``.
"""

from __future__ import annotations

__all__ = [
    "FIELD_SIZES",
    "Layout",
    "layout",
    "OutputVector",
    "Target",
    "Decoded",
    "class_probabilities",
    "encode",
    "decode",
    "decode_tensor",
]

import logging
from typing import Any, Sequence

import numpy as np

from tinylcn.anchors import Anchor
from tinylcn.geometry import (
    BehindCameraError,
    Box2D,
    Box3D,
    Calibration,
    backproject,
    corners3d,
    enclosing_rect,
    nms_xyxy,
    project,
    project_points,
    refine_alpha,
)
from tinylcn.helpers import JAXArray, dataclass, field, wrap_angle
from tinylcn.kitti import DEFAULT_CLASS_NAMES, LabelRecord, from_boxes

logger = logging.getLogger(__name__)

FIELD_SIZES = (("t2d", 4), ("tP", 2), ("t3d", 5), ("tC", 24))
TINY = np.finfo(np.float64).tiny


@dataclass
class Layout:
    """The position of every field within the output tensor

    Args:
        n_a: The number of anchors per output cell.
        n_c: The number of classes, background included.
    """

    n_a: int = field(pytree_node=False)
    n_c: int = field(pytree_node=False)

    def __post_init__(self) -> None:
        if self.n_a < 1 or self.n_c < 1:
            raise ValueError(
                f"'n_a' and 'n_c' must be positive; got n_a={self.n_a}, n_c={self.n_c}"
            )

    @property
    def vector_length(self) -> int:
        return 35 + self.n_c

    @property
    def channels(self) -> int:
        return self.n_a * self.vector_length

    @property
    def offsets(self) -> dict[str, slice]:
        """The slice of each field within one anchor's vector"""
        result = {}
        start = 0
        for name, size in FIELD_SIZES + (("scores", self.n_c),):
            result[name] = slice(start, start + size)
            start += size
        return result

    def channel(self, anchor: int, slot: int) -> int:
        """The tensor channel holding ``slot`` of anchor ``anchor``"""
        if not 0 <= anchor < self.n_a or not 0 <= slot < self.vector_length:
            raise ValueError(f"Slot ({anchor}, {slot}) is out of range for {self}")
        return anchor * self.vector_length + slot

    def total(self, h: int, w: int) -> int:
        """The number of outputs for an ``h x w`` grid"""
        return h * w * self.channels


def layout(n_a: int, n_c: int) -> Layout:
    """The output layout for ``n_a`` anchors and ``n_c`` classes

    .. code-block:: python

        >>> from tinylcn.codec import layout
        >>> lay = layout(36, 4)
        >>> lay.vector_length, lay.channels
        (39, 1404)
        >>> lay.channel(2, 5)
        83
    """
    return Layout(n_a=n_a, n_c=n_c)


@dataclass
class OutputVector:
    """One anchor's slice of the network output

    Args:
        t2d: ``(tx, ty, tw, th)`` for the 2D box.
        tP: ``(tx, ty)`` for the projected 3D center.
        t3d: ``(tz, tw, th, tl, talpha)``.
        tC: An ``(8, 3)`` array of corner offsets ``(tx, ty, tz)``.
        scores: The ``n_c`` class scores (logits).
    """

    t2d: JAXArray
    tP: JAXArray
    t3d: JAXArray
    tC: JAXArray
    scores: JAXArray

    @classmethod
    def from_array(cls, values: JAXArray, n_c: int) -> OutputVector:
        values = np.asarray(values, dtype=np.float64)
        lay = layout(1, n_c)
        if values.shape != (lay.vector_length,):
            raise ValueError(
                f"Expected a vector of length {lay.vector_length}; got {values.shape}"
            )
        off = lay.offsets
        return cls(
            t2d=values[off["t2d"]],
            tP=values[off["tP"]],
            t3d=values[off["t3d"]],
            tC=values[off["tC"]].reshape(8, 3),
            scores=values[off["scores"]],
        )

    @classmethod
    def zeros(cls, n_c: int) -> OutputVector:
        return cls.from_array(np.zeros(35 + n_c), n_c)

    @property
    def n_c(self) -> int:
        return int(np.size(self.scores))

    def to_array(self) -> np.ndarray:
        return np.concatenate(
            [
                np.ravel(self.t2d),
                np.ravel(self.tP),
                np.ravel(self.t3d),
                np.ravel(self.tC),
                np.ravel(self.scores),
            ]
        ).astype(np.float64)


@dataclass
class Target:
    """The decoded form of an output vector, also used as a training target

    Args:
        box2d: The 2D box.
        center: The ``(u, v)`` projection of the 3D center.
        depth: The homogeneous depth of the 3D center.
        box3d: The 3D box.
        corners: An ``(8, 3)`` array of projected corners ``(u, v, depth)``.
    """

    box2d: Box2D
    center: JAXArray
    depth: float
    box3d: Box3D
    corners: JAXArray

    @classmethod
    def from_box(
        cls, box3d: Box3D, calib: Calibration, box2d: Box2D | None = None
    ) -> Target:
        """Build a target from a 3D box

        The 2D box defaults to the rectangle enclosing the projected 3D box.
        """
        if box2d is None:
            box2d = enclosing_rect(calib, box3d)
        u, v, depth = project(calib, box3d.center)
        uv, corner_depth = project_points(calib, corners3d(box3d).points)
        corners = np.concatenate(
            [np.asarray(uv), np.asarray(corner_depth)[:, None]], axis=1
        )
        return cls(
            box2d=box2d,
            center=np.array([u, v]),
            depth=depth,
            box3d=box3d,
            corners=corners,
        )


Decoded = Target


def class_probabilities(scores: JAXArray) -> np.ndarray:
    """The softmax of a score vector"""
    scores = np.asarray(scores, dtype=np.float64)
    e = np.exp(scores - np.max(scores))
    return e / np.sum(e)


def _scale(size: Any, t: Any) -> Any:
    """``size * exp(t)``, floored at the smallest positive float"""
    return np.maximum(size * np.exp(t), TINY)


def _check_anchor(anchor: Anchor) -> tuple[np.ndarray, np.ndarray]:
    if anchor.a3d is None:
        raise ValueError("The anchor has no 3D priors; run fit_priors first")
    return np.asarray(anchor.a2d, dtype=np.float64), np.asarray(
        anchor.a3d, dtype=np.float64
    )


def encode(gt: Target, anchor: Anchor, n_c: int = 4) -> OutputVector:
    """Express a target as residuals with respect to an anchor

    This is the exact inverse of :func:`decode`. The score slots hold the
    one-hot encoding of the target's ``class_id``.

    Raises:
        ValueError: If the anchor has no priors or any size is not positive.
    """
    (ax, ay, aw, ah), (az, aw3, ah3, al3, aalpha) = _check_anchor(anchor)
    if gt.box2d.w <= 0 or gt.box2d.h <= 0:
        raise ValueError(f"2D box sizes must be positive; got {gt.box2d}")
    dims = np.asarray(gt.box3d.dims, dtype=np.float64)
    if np.any(dims <= 0):
        raise ValueError(f"3D box dimensions must be positive; got {dims}")
    if not 0 <= gt.box3d.class_id < n_c:
        raise ValueError(f"class_id {gt.box3d.class_id} is out of range for n_c={n_c}")

    corners = np.asarray(gt.corners, dtype=np.float64)
    tC = np.stack(
        [(corners[:, 0] - ax) / aw, (corners[:, 1] - ay) / ah, corners[:, 2] - az],
        axis=1,
    )
    scores = np.zeros(n_c)
    scores[gt.box3d.class_id] = 1.0
    return OutputVector(
        t2d=np.array(
            [
                (gt.box2d.cx - ax) / aw,
                (gt.box2d.cy - ay) / ah,
                np.log(gt.box2d.w / aw),
                np.log(gt.box2d.h / ah),
            ]
        ),
        tP=np.array([(gt.center[0] - ax) / aw, (gt.center[1] - ay) / ah]),
        t3d=np.array(
            [
                gt.depth - az,
                np.log(dims[0] / aw3),
                np.log(dims[1] / ah3),
                np.log(dims[2] / al3),
                wrap_angle(gt.box3d.alpha - aalpha),
            ]
        ),
        tC=tC,
        scores=scores,
    )


def decode(out: OutputVector, anchor: Anchor, calib: Calibration) -> Decoded:
    """Turn an output vector into boxes using an anchor

    The class is the most probable foreground class under the softmax of
    ``out.scores`` and its probability becomes the box score. With a single
    class the box is assigned class 0 with score 1. Sizes are
    ``anchor * exp(t)`` and stay positive for any finite residual.

    Raises:
        ValueError: If the anchor has no priors.
        BehindCameraError: If the decoded depth puts the object center on or
            behind the camera plane.
    """
    (ax, ay, aw, ah), (az, aw3, ah3, al3, aalpha) = _check_anchor(anchor)
    t2d = np.asarray(out.t2d, dtype=np.float64)
    tP = np.asarray(out.tP, dtype=np.float64)
    t3d = np.asarray(out.t3d, dtype=np.float64)
    tC = np.asarray(out.tC, dtype=np.float64).reshape(8, 3)

    box2d = Box2D(
        cx=float(ax + t2d[0] * aw),
        cy=float(ay + t2d[1] * ah),
        w=float(_scale(aw, t2d[2])),
        h=float(_scale(ah, t2d[3])),
    )
    u = float(ax + tP[0] * aw)
    v = float(ay + tP[1] * ah)
    depth = float(az + t3d[0])
    dims = _scale(np.array([aw3, ah3, al3]), t3d[1:4])
    alpha = wrap_angle(aalpha + t3d[4])
    corners = np.stack([ax + tC[:, 0] * aw, ay + tC[:, 1] * ah, az + tC[:, 2]], axis=1)

    probs = class_probabilities(out.scores)
    if probs.size > 1:
        class_id = 1 + int(np.argmax(probs[1:]))
    else:
        class_id = 0
    center = np.asarray(backproject(calib, u, v, depth))
    if depth <= 0 or center[2] <= 0:
        raise BehindCameraError(
            f"Decoded depth {depth} puts the object center at z = {center[2]}"
        )
    box3d = Box3D.create(
        center, dims, alpha=alpha, score=float(probs[class_id]), class_id=class_id
    )
    return Decoded(
        box2d=box2d, center=np.array([u, v]), depth=depth, box3d=box3d, corners=corners
    )


def decode_tensor(
    tensor: JAXArray,
    anchors: Sequence[Anchor],
    calib: Calibration | Sequence[Calibration],
    *,
    n_c: int = 4,
    stride: int = 16,
    score_thresh: float = 0.5,
    nms_thresh: float = 0.4,
    refine: bool = False,
    class_names: Sequence[str] = DEFAULT_CLASS_NAMES,
) -> list[list[LabelRecord]]:
    """Decode a full output tensor into label records

    Args:
        tensor: The output with shape ``(n, n_a * (35 + n_c), h, w)``; channel
            ``a * (35 + n_c) + f`` holds slot ``f`` of anchor ``a``.
        anchors: The ``n_a`` fitted anchors.
        calib: One calibration per image, or a single one shared by all.
        n_c: The number of classes, background included.
        stride: The output stride in pixels.
        score_thresh: Candidates whose score is below this are dropped.
        nms_thresh: The IoU threshold for 2D non-maximum suppression.
        refine: If ``True``, run :func:`tinylcn.geometry.refine_alpha` on the
            kept boxes.
        class_names: The name of each class index.

    Returns:
        One list of records per image, in descending score order.
    """
    tensor = np.asarray(tensor, dtype=np.float64)
    lay = layout(len(anchors), n_c)
    if tensor.ndim != 4 or tensor.shape[1] != lay.channels:
        raise ValueError(
            f"Expected a tensor with {lay.channels} channels for {lay.n_a} anchors "
            f"and {n_c} classes; got shape {tensor.shape}"
        )
    if len(class_names) < n_c:
        raise ValueError(f"Need {n_c} class names; got {len(class_names)}")
    n, _, h, w = tensor.shape
    calibs = [calib] * n if isinstance(calib, Calibration) else list(calib)
    if len(calibs) != n:
        raise ValueError(f"Got {len(calibs)} calibrations for {n} images")

    grid = tensor.reshape(n, lay.n_a, lay.vector_length, h, w)
    logits = grid[:, :, lay.offsets["scores"]]
    probs = np.exp(logits - logits.max(axis=2, keepdims=True))
    probs /= probs.sum(axis=2, keepdims=True)
    best = probs[:, :, 1:].max(axis=2) if n_c > 1 else probs[:, :, 0]

    results = []
    for i in range(n):
        boxes2d = []
        boxes3d = []
        for a, row, col in zip(*np.nonzero(best[i] >= score_thresh)):
            out = OutputVector.from_array(grid[i, a, :, row, col], n_c)
            placed = anchors[a].place(int(row), int(col), stride)
            try:
                decoded = decode(out, placed, calibs[i])
            except BehindCameraError as e:
                logger.debug(
                    "image %d: dropped anchor %d at (%d, %d): %s", i, a, row, col, e
                )
                continue
            boxes2d.append(decoded.box2d)
            boxes3d.append(decoded.box3d)
        if not boxes2d:
            results.append([])
            continue
        keep = nms_xyxy(
            np.array([b.xyxy for b in boxes2d]),
            np.array([b.score for b in boxes3d]),
            nms_thresh,
        )
        logger.debug(
            "image %d: %d candidates, %d after nms", i, len(boxes2d), len(keep)
        )
        records = []
        for j in keep:
            box3d = boxes3d[j]
            if refine:
                box3d = refine_alpha(box3d, boxes2d[j], calibs[i])
            records.append(from_boxes(boxes2d[j], box3d, class_names[box3d.class_id]))
        results.append(records)
    return results
