"""
Detection evaluation in the style of the KITTI object benchmark. Detections
are matched greedily to ground truth in descending score order, the resulting
precision/recall curve is summarized by interpolated average precision
sampled at 11 recall positions (``R11``, including recall 0) or 40 positions
(``R40``, excluding recall 0), and results are reported per class, difficulty
level and overlap metric (``2d``, ``bev`` or ``3d``).
"""

from __future__ import annotations

__all__ = [
    "DIFFICULTIES",
    "DEFAULT_IOU_THRESHOLDS",
    "NEIGHBOR_CLASSES",
    "PRCurve",
    "pr_curve",
    "ap",
    "in_difficulty",
    "difficulty_filter",
    "EvalConfig",
    "EvalEntry",
    "EvalReport",
    "evaluate",
]

import dataclasses
import json
import logging
from typing import Any, Callable, Mapping, NamedTuple, Optional, Sequence, TypeVar

import numpy as np

from tinylcn.geometry import iou2d, iou3d, iou_bev
from tinylcn.helpers import dataclass, field
from tinylcn.kitti import LabelRecord, to_box3d

logger = logging.getLogger(__name__)

T = TypeVar("T")
U = TypeVar("U")


class Difficulty(NamedTuple):
    min_height: float
    max_occlusion: int
    max_truncation: float


DIFFICULTIES = {
    "easy": Difficulty(40.0, 0, 0.15),
    "moderate": Difficulty(25.0, 1, 0.30),
    "hard": Difficulty(25.0, 2, 0.50),
}
DEFAULT_IOU_THRESHOLDS = {"Car": 0.7, "Pedestrian": 0.5, "Cyclist": 0.5}
NEIGHBOR_CLASSES = {"Car": ("Van",), "Pedestrian": ("Person_sitting",)}
RECALL_SAMPLES = {
    "R11": np.linspace(0.0, 1.0, 11),
    "R40": np.arange(1, 41) / 40.0,
}
DONTCARE_COVERAGE = 0.5


@dataclass
class PRCurve:
    """A precision/recall curve, one point per counted detection

    Points are ordered by decreasing score threshold, so ``recall`` is
    non-decreasing along the arrays.

    Args:
        thresholds: The score of the detection that produced each point.
        precision: The precision at each point.
        recall: The recall at each point.
        tp: The cumulative number of true positives.
        fp: The cumulative number of false positives.
        fn: The number of ground truth boxes still unmatched.
        n_gt: The number of (non-ignored) ground truth boxes.
    """

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    n_gt: int = field(pytree_node=False, default=0)

    def __len__(self) -> int:
        return len(self.thresholds)


def pr_curve(
    dets: Sequence[Sequence[tuple[T, float]]],
    gts: Sequence[Sequence[U]],
    iou_fn: Callable[[T, U], float],
    iou_thresh: float = 0.7,
    *,
    ignored_gts: Optional[Sequence[Sequence[bool]]] = None,
    ignored_dets: Optional[Sequence[Sequence[bool]]] = None,
) -> PRCurve:
    """Match detections to ground truth and build the precision/recall curve

    Detections from all images are visited in descending score order; equal
    scores keep their input order (image by image). Each detection takes the
    unmatched, non-ignored ground truth box of its image with the highest
    overlap and counts as a true positive if that overlap reaches
    ``iou_thresh``. Otherwise it is not counted at all if it reaches the
    threshold with an ignored ground truth box or is itself flagged in
    ``ignored_dets``, and it is a false positive in every other case.

    Args:
        dets: Per image, a sequence of ``(detection, score)`` pairs.
        gts: Per image, the ground truth boxes.
        iou_fn: The overlap between a detection and a ground truth box.
        iou_thresh: The minimum overlap of a true positive.
        ignored_gts: Per image, flags for ground truth boxes that neither
            count as misses nor cause false positives.
        ignored_dets: Per image, flags for detections that are dropped when
            they do not match a ground truth box.
    """
    if len(dets) != len(gts):
        raise ValueError(
            f"Got detections for {len(dets)} images and gts for {len(gts)}"
        )
    gt_ignored = [
        np.zeros(len(g), dtype=bool) if ignored_gts is None else np.asarray(ig, bool)
        for g, ig in zip(gts, ignored_gts or [None] * len(gts))
    ]
    det_ignored = [
        np.zeros(len(d), dtype=bool) if ignored_dets is None else np.asarray(ig, bool)
        for d, ig in zip(dets, ignored_dets or [None] * len(dets))
    ]
    n_gt = int(sum(np.sum(~ig) for ig in gt_ignored))

    order = sorted(
        ((img, j) for img, image in enumerate(dets) for j in range(len(image))),
        key=lambda key: -dets[key[0]][key[1]][1],
    )
    matched = [np.zeros(len(g), dtype=bool) for g in gts]
    thresholds, tps, fps = [], [], []
    tp = fp = 0
    for img, j in order:
        det, score = dets[img][j]
        best, best_iou = -1, -np.inf
        absorbed = False
        for g, gt in enumerate(gts[img]):
            if matched[img][g]:
                continue
            overlap = iou_fn(det, gt)
            if gt_ignored[img][g]:
                absorbed = absorbed or overlap >= iou_thresh
            elif overlap > best_iou:
                best, best_iou = g, overlap
        if best >= 0 and best_iou >= iou_thresh:
            matched[img][best] = True
            tp += 1
        elif absorbed or det_ignored[img][j]:
            continue
        else:
            fp += 1
        thresholds.append(score)
        tps.append(tp)
        fps.append(fp)

    tp_arr = np.array(tps, dtype=int)
    fp_arr = np.array(fps, dtype=int)
    counted = np.maximum(tp_arr + fp_arr, 1)
    return PRCurve(
        thresholds=np.array(thresholds, dtype=np.float64),
        precision=tp_arr / counted,
        recall=tp_arr / n_gt if n_gt > 0 else np.zeros(len(tp_arr)),
        tp=tp_arr,
        fp=fp_arr,
        fn=n_gt - tp_arr,
        n_gt=n_gt,
    )


def ap(curve: PRCurve, variant: str = "R40") -> float:
    """Interpolated average precision

    The interpolated precision at recall ``r`` is the highest precision of
    any point with recall at least ``r``, or 0 if there is none; AP is its
    mean over the sample set of ``variant``.
    """
    try:
        samples = RECALL_SAMPLES[variant]
    except KeyError:
        raise ValueError(
            f"Unknown AP variant '{variant}'; expected 'R11' or 'R40'"
        ) from None
    if len(curve) == 0:
        return 0.0
    recall = np.asarray(curve.recall)
    precision = np.asarray(curve.precision)
    total = 0.0
    for r in samples:
        mask = recall >= r - 1e-12
        total += float(precision[mask].max()) if np.any(mask) else 0.0
    return total / len(samples)


def in_difficulty(record: LabelRecord, level: str) -> bool:
    try:
        d = DIFFICULTIES[level]
    except KeyError:
        raise ValueError(f"Unknown difficulty '{level}'") from None
    return (
        record.height >= d.min_height
        and record.occluded <= d.max_occlusion
        and record.truncated <= d.max_truncation
    )


def difficulty_filter(gts: Sequence[LabelRecord], level: str) -> list[LabelRecord]:
    """The ground truth records that belong to a difficulty level"""
    return [r for r in gts if in_difficulty(r, level)]


@dataclasses.dataclass(frozen=True)
class EvalConfig:
    """Settings for :func:`evaluate`

    Args:
        classes: The class names to evaluate.
        iou_thresholds: The overlap threshold of each class.
        metrics: Any of ``"2d"``, ``"bev"`` and ``"3d"``.
        difficulties: Any of ``"easy"``, ``"moderate"`` and ``"hard"``.
        variants: Any of ``"R11"`` and ``"R40"``.
    """

    classes: tuple[str, ...] = ("Car", "Pedestrian", "Cyclist")
    iou_thresholds: Mapping[str, float] = dataclasses.field(
        default_factory=lambda: dict(DEFAULT_IOU_THRESHOLDS)
    )
    metrics: tuple[str, ...] = ("2d", "bev", "3d")
    difficulties: tuple[str, ...] = ("easy", "moderate", "hard")
    variants: tuple[str, ...] = ("R11", "R40")

    def __post_init__(self) -> None:
        for m in self.metrics:
            if m not in _IOU_FUNCTIONS:
                raise ValueError(f"Unknown metric '{m}'")
        for level in self.difficulties:
            if level not in DIFFICULTIES:
                raise ValueError(f"Unknown difficulty '{level}'")
        for v in self.variants:
            if v not in RECALL_SAMPLES:
                raise ValueError(f"Unknown AP variant '{v}'")
        for c in self.classes:
            if c not in self.iou_thresholds:
                raise ValueError(f"No IoU threshold for class '{c}'")

    def with_iou_thresh(self, thresh: float) -> EvalConfig:
        """A copy using the same threshold for every class"""
        return dataclasses.replace(
            self, iou_thresholds={c: float(thresh) for c in self.classes}
        )


class EvalEntry(NamedTuple):
    cls: str
    metric: str
    difficulty: str
    variant: str
    ap: Optional[float]
    n_gt: int


@dataclasses.dataclass(frozen=True)
class EvalReport:
    """AP values keyed by class, metric, difficulty and variant

    ``ap`` is ``None`` where a class has no ground truth at a difficulty.
    """

    entries: tuple[EvalEntry, ...]

    def get(
        self, cls: str, metric: str, difficulty: str, variant: str
    ) -> Optional[float]:
        for e in self.entries:
            if (e.cls, e.metric, e.difficulty, e.variant) == (
                cls,
                metric,
                difficulty,
                variant,
            ):
                return e.ap
        raise KeyError((cls, metric, difficulty, variant))

    def to_text(self) -> str:
        lines = []
        for e in self.entries:
            value = "n/a" if e.ap is None else f"{100 * e.ap:.4f}"
            lines.append(
                f"{e.cls:<12s} {e.metric:<4s} {e.difficulty:<9s} {e.variant:<4s} "
                f"{value:>9s}  (n_gt={e.n_gt})"
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps([e._asdict() for e in self.entries], indent=2)


_IOU_FUNCTIONS: dict[str, Callable[[Any, Any], float]] = {
    "2d": iou2d,
    "bev": iou_bev,
    "3d": iou3d,
}


def _geometry(record: LabelRecord, metric: str) -> Any:
    if metric == "2d":
        return record.box2d
    return to_box3d(record)


def _coverage(det: LabelRecord, region: LabelRecord) -> float:
    """The fraction of the detection's 2D box lying inside ``region``"""
    l1, t1, r1, b1 = det.bbox
    l2, t2, r2, b2 = region.bbox
    inter = max(0.0, min(r1, r2) - max(l1, l2)) * max(0.0, min(b1, b2) - max(t1, t2))
    area = (r1 - l1) * (b1 - t1)
    return inter / area if area > 0 else 0.0


def evaluate(
    gts: Mapping[str, Sequence[LabelRecord]],
    dets: Mapping[str, Sequence[LabelRecord]],
    config: EvalConfig | None = None,
) -> EvalReport:
    """Evaluate detections against ground truth, image by image

    For each class and difficulty level, ground truth boxes of the class
    outside the level, and boxes of a neighboring class (``Van`` for ``Car``,
    ``Person_sitting`` for ``Pedestrian``), are ignored. Unmatched detections
    below the level's minimum height or mostly covered by a ``DontCare``
    region are ignored as well.

    Args:
        gts: Ground truth records keyed by image id.
        dets: Detection records keyed by image id; images missing here have
            no detections. Records without a score count as score 1.
        config: The evaluation settings.
    """
    config = EvalConfig() if config is None else config
    images = sorted(gts)
    extra = sorted(set(dets) - set(gts))
    if extra:
        logger.warning("ignoring detections for %d images without labels", len(extra))

    entries = []
    for cls in config.classes:
        neighbors = NEIGHBOR_CLASSES.get(cls, ())
        for metric in config.metrics:
            iou_fn = _IOU_FUNCTIONS[metric]
            for level in config.difficulties:
                min_height = DIFFICULTIES[level].min_height
                image_gts, image_gt_ignored = [], []
                image_dets, image_det_ignored = [], []
                for image in images:
                    labels = gts[image]
                    dontcare = [r for r in labels if r.is_dontcare]
                    relevant = [
                        r for r in labels if r.type == cls or r.type in neighbors
                    ]
                    image_gts.append([_geometry(r, metric) for r in relevant])
                    image_gt_ignored.append(
                        [r.type != cls or not in_difficulty(r, level) for r in relevant]
                    )
                    own = [r for r in dets.get(image, ()) if r.type == cls]
                    image_dets.append(
                        [
                            (_geometry(r, metric), 1.0 if r.score is None else r.score)
                            for r in own
                        ]
                    )
                    image_det_ignored.append(
                        [
                            r.height < min_height
                            or any(
                                _coverage(r, dc) >= DONTCARE_COVERAGE
                                for dc in dontcare
                            )
                            for r in own
                        ]
                    )
                curve = pr_curve(
                    image_dets,
                    image_gts,
                    iou_fn,
                    config.iou_thresholds[cls],
                    ignored_gts=image_gt_ignored,
                    ignored_dets=image_det_ignored,
                )
                for variant in config.variants:
                    value = ap(curve, variant) if curve.n_gt > 0 else None
                    entries.append(
                        EvalEntry(cls, metric, level, variant, value, curve.n_gt)
                    )
                logger.debug(
                    "%s %s %s: %d gts, %d counted detections",
                    cls,
                    metric,
                    level,
                    curve.n_gt,
                    len(curve),
                )
    return EvalReport(entries=tuple(entries))
