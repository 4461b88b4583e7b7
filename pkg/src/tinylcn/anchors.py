"""
Anchor templates and their 3D priors. There are 36 templates: 12 heights
``30 * 1.265**e`` for ``e = 0, ..., 11`` crossed with the width-to-height
ratios ``0.5, 1.0, 1.5``. Each template is shared across every location of the
stride-16 output grid; :func:`fit_priors` attaches to it the mean depth,
dimensions and allocentric pose of the ground truth boxes it matches.

Anchors serialize to a JSON array of records::

    [{"a2d": [Ax, Ay, Aw, Ah],
      "a3d": [Az, Aw3d, Ah3d, Al3d, Aalpha] or null,
      "match_count": 3,
      "fallback": false}, ...]
"""

from __future__ import annotations

__all__ = [
    "BASE_HEIGHT",
    "HEIGHT_SCALE",
    "NUM_SCALES",
    "ASPECT_RATIOS",
    "Anchor",
    "generate_templates",
    "grid_centers",
    "fit_priors",
    "anchors_to_json",
    "anchors_from_json",
    "save_anchors",
    "load_anchors",
]

import json
import logging
import math
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from tinylcn.geometry import BehindCameraError, Box3D, Calibration, enclosing_rect
from tinylcn.geometry.iou import iou2d_matrix
from tinylcn.helpers import JAXArray, dataclass, field

logger = logging.getLogger(__name__)

BASE_HEIGHT = 30.0
HEIGHT_SCALE = 1.265
NUM_SCALES = 12
ASPECT_RATIOS = (0.5, 1.0, 1.5)
MATCH_IOU = 0.5


@dataclass
class Anchor:
    """A 2D anchor box with optional 3D priors

    Args:
        a2d: ``(Ax, Ay, Aw, Ah)`` in pixels. Templates have ``Ax = Ay = 0``;
            use :func:`Anchor.place` to position one on the output grid.
        a3d: ``(Az, Aw3d, Ah3d, Al3d, Aalpha)`` or ``None`` before fitting.
        match_count: The number of distinct ground truth boxes that matched
            the template.
        fallback: ``True`` if ``a3d`` is the global fallback prior because no
            ground truth matched.
    """

    a2d: JAXArray
    a3d: JAXArray | None = None
    match_count: int = field(pytree_node=False, default=0)
    fallback: bool = field(pytree_node=False, default=False)

    def __post_init__(self) -> None:
        if np.shape(self.a2d) != (4,):
            raise ValueError(f"a2d must have 4 entries; got shape {np.shape(self.a2d)}")
        if self.a2d[2] <= 0 or self.a2d[3] <= 0:
            raise ValueError(
                f"Anchor sizes must be positive; got {tuple(self.a2d[2:])}"
            )
        if self.a3d is not None:
            if np.shape(self.a3d) != (5,):
                raise ValueError(
                    f"a3d must have 5 entries; got shape {np.shape(self.a3d)}"
                )
            if np.any(np.asarray(self.a3d)[1:4] <= 0):
                raise ValueError(f"Prior dimensions must be positive; got {self.a3d}")

    @property
    def has_priors(self) -> bool:
        return self.a3d is not None

    def place(self, row: int, col: int, stride: int = 16) -> Anchor:
        """A copy centered on output cell ``(row, col)``"""
        cx = (col + 0.5) * stride
        cy = (row + 0.5) * stride
        a2d = np.array([cx, cy, self.a2d[2], self.a2d[3]], dtype=np.float64)
        return self.replace(a2d=a2d)


def generate_templates() -> list[Anchor]:
    """The 36 anchor templates, heights outermost"""
    templates = []
    for e in range(NUM_SCALES):
        h = BASE_HEIGHT * HEIGHT_SCALE**e
        for r in ASPECT_RATIOS:
            templates.append(Anchor(a2d=np.array([0.0, 0.0, h * r, h])))
    return templates


def grid_centers(count: int, stride: int = 16) -> np.ndarray:
    """Pixel centers ``(i + 0.5) * stride`` of ``count`` consecutive cells"""
    return (np.arange(count, dtype=np.float64) + 0.5) * stride


def _placements(template: Anchor, rows: int, cols: int, stride: int) -> np.ndarray:
    cy, cx = np.meshgrid(
        grid_centers(rows, stride), grid_centers(cols, stride), indexing="ij"
    )
    w, h = float(template.a2d[2]), float(template.a2d[3])
    return np.stack(
        [cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=-1
    ).reshape(-1, 4)


def _statistics(box: Box3D) -> np.ndarray:
    w, h, l = (float(v) for v in np.asarray(box.dims))
    return np.array(
        [float(box.center[2]), w, h, l, math.sin(box.alpha), math.cos(box.alpha)]
    )


def _prior(total: np.ndarray, count: int) -> np.ndarray:
    mean = total / count
    return np.array([mean[0], mean[1], mean[2], mean[3], math.atan2(mean[4], mean[5])])


def fit_priors(
    templates: Sequence[Anchor],
    gts: Sequence[tuple[Box3D, Calibration]],
    stride: int = 16,
    image_size: tuple[int, int] = (375, 1242),
) -> list[Anchor]:
    """Attach 3D priors to anchor templates from ground truth statistics

    Every ground truth box is projected to its enclosing image rectangle. A
    box matches a template if the template, placed at any cell center of the
    ``stride`` grid covering ``image_size`` (rows, columns), overlaps the
    rectangle with IoU at least 0.5. A template's prior is the mean of the
    matched boxes' depth and dimensions, with ``alpha`` averaged on the unit
    circle. Sums are accumulated in ground truth order.

    Templates without any match receive the global mean over all ground
    truth boxes and are flagged with ``fallback=True``.

    Args:
        templates: The templates from :func:`generate_templates`.
        gts: ``(box, calibration)`` pairs.
        stride: The grid spacing in pixels.
        image_size: The image ``(height, width)`` in pixels.

    Raises:
        ValueError: If there are no usable ground truth boxes.
    """
    if stride < 1:
        raise ValueError(f"'stride' must be positive; got {stride}")
    rows = math.ceil(image_size[0] / stride)
    cols = math.ceil(image_size[1] / stride)

    rects = []
    stats = []
    for box, calib in gts:
        try:
            rects.append(enclosing_rect(calib, box).xyxy)
        except BehindCameraError:
            logger.info("skipping a ground truth box partly behind the camera")
            continue
        stats.append(_statistics(box))
    if not stats:
        raise ValueError("Cannot fit anchor priors without any ground truth boxes")
    rects_arr = np.array(rects)

    matched = np.stack(
        [
            iou2d_matrix(_placements(t, rows, cols, stride), rects_arr).max(axis=0)
            >= MATCH_IOU
            for t in templates
        ]
    )

    totals = np.zeros((len(templates), 6))
    counts = np.zeros(len(templates), dtype=int)
    overall = np.zeros(6)
    for n, row in enumerate(stats):
        totals[matched[:, n]] += row
        counts[matched[:, n]] += 1
        overall += row
    fallback = _prior(overall, len(stats))

    anchors = []
    for t, total, count in zip(templates, totals, counts):
        if count > 0:
            anchors.append(t.replace(a3d=_prior(total, count), match_count=int(count)))
        else:
            anchors.append(t.replace(a3d=fallback, match_count=0, fallback=True))
    unmatched = int(np.sum(counts == 0))
    if unmatched:
        logger.info("%d of %d anchors matched no ground truth", unmatched, len(anchors))
    return anchors


def _to_record(anchor: Anchor) -> dict[str, Any]:
    return {
        "a2d": np.asarray(anchor.a2d).tolist(),
        "a3d": None if anchor.a3d is None else np.asarray(anchor.a3d).tolist(),
        "match_count": int(anchor.match_count),
        "fallback": bool(anchor.fallback),
    }


def _from_record(record: dict[str, Any]) -> Anchor:
    try:
        a3d = record.get("a3d")
        return Anchor(
            a2d=np.asarray(record["a2d"], dtype=np.float64),
            a3d=None if a3d is None else np.asarray(a3d, dtype=np.float64),
            match_count=int(record.get("match_count", 0)),
            fallback=bool(record.get("fallback", False)),
        )
    except (KeyError, TypeError) as e:
        raise ValueError(f"Invalid anchor record {record!r}") from e


def anchors_to_json(anchors: Sequence[Anchor]) -> str:
    return json.dumps([_to_record(a) for a in anchors], indent=2)


def anchors_from_json(text: str) -> list[Anchor]:
    records = json.loads(text)
    if not isinstance(records, list):
        raise ValueError("An anchors document must be a JSON array")
    return [_from_record(r) for r in records]


def save_anchors(path: str | Path, anchors: Sequence[Anchor]) -> None:
    Path(path).write_text(anchors_to_json(anchors) + "\n")


def load_anchors(path: str | Path) -> list[Anchor]:
    return anchors_from_json(Path(path).read_text())
