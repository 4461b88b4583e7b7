# mypy: ignore-errors

import numpy as np
import pytest

from tinylcn.geometry import Box2D, iou2d_matrix, nms, nms_xyxy


@pytest.fixture
def random():
    return np.random.default_rng(771)


def test_examples():
    a = Box2D.from_xyxy(0.0, 0.0, 1.0, 1.0)
    assert nms([]) == []
    assert nms([(a, 0.3)]) == [0]
    assert nms([(a, 0.9), (a, 0.8)], 0.4) == [0]
    assert nms([(a, 0.8), (a, 0.9)], 0.4) == [1]
    b = Box2D.from_xyxy(0.5, 0.0, 1.5, 1.0)
    assert nms([(a, 0.9), (b, 0.8)], 0.4) == [0, 1]
    assert nms([(a, 0.9), (b, 0.8)], 0.3) == [0]


def test_ties_prefer_lower_index():
    a = Box2D.from_xyxy(0.0, 0.0, 1.0, 1.0)
    assert nms([(a, 0.5), (a, 0.5), (a, 0.5)]) == [0]


def test_permutation_invariance(random):
    lo = random.uniform(0, 100, (30, 2))
    xyxy = np.concatenate([lo, lo + random.uniform(10, 40, (30, 2))], axis=1)
    scores = random.permutation(30) / 30.0
    keep = {tuple(xyxy[i]) for i in nms_xyxy(xyxy, scores)}
    perm = random.permutation(30)
    kept = {tuple(xyxy[perm][i]) for i in nms_xyxy(xyxy[perm], scores[perm])}
    assert keep == kept

    # Kept boxes never overlap above the threshold
    kept_boxes = np.array(sorted(keep))
    overlaps = iou2d_matrix(kept_boxes, kept_boxes)
    np.fill_diagonal(overlaps, 0.0)
    assert np.all(overlaps <= 0.4)


def test_length_mismatch():
    with pytest.raises(ValueError):
        nms_xyxy(np.zeros((2, 4)), np.zeros(3))
