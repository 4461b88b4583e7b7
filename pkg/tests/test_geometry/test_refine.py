# mypy: ignore-errors

import numpy as np
import pytest

from tinylcn.geometry import (
    Box2D,
    Box3D,
    Calibration,
    alignment,
    enclosing_rect,
    refine_alpha,
)
from tinylcn.helpers import wrap_angle


@pytest.fixture
def calib():
    return Calibration.from_values(
        [721.5377, 0, 609.5593, 44.85728]
        + [0, 721.5377, 172.854, 0.2163791]
        + [0, 0, 1, 0.002745884]
    )


@pytest.fixture
def gt():
    return Box3D.create((2.5, 1.6, 15.0), (1.6, 1.5, 3.9), ry=0.6)


def test_optimal_box_is_unchanged(calib, gt):
    target = enclosing_rect(calib, gt)
    refined = refine_alpha(gt, target, calib)
    assert refined.alpha == gt.alpha
    np.testing.assert_allclose(alignment(refined, target, calib), 1.0)


@pytest.mark.parametrize("offset", [-0.3, -0.1, 0.05, 0.2])
def test_objective_never_decreases(calib, gt, offset):
    target = enclosing_rect(calib, gt)
    start = gt.with_alpha(gt.alpha + offset)
    refined = refine_alpha(start, target, calib)
    assert alignment(refined, target, calib) >= alignment(start, target, calib)
    np.testing.assert_allclose(refined.center, start.center)
    np.testing.assert_allclose(refined.dims, start.dims)


def test_moves_toward_ground_truth(calib, gt):
    target = enclosing_rect(calib, gt)
    start = gt.with_alpha(gt.alpha + 0.1)
    refined = refine_alpha(start, target, calib)
    assert abs(wrap_angle(refined.alpha - gt.alpha)) < 0.1

    grid = gt.alpha + np.linspace(-0.5, 0.5, 2001)
    best = max(alignment(gt.with_alpha(a), target, calib) for a in grid)
    assert alignment(refined, target, calib) >= best - 5e-3


def test_ry_follows_alpha(calib, gt):
    target = Box2D.from_xyxy(*enclosing_rect(calib, gt).xyxy)
    refined = refine_alpha(gt.with_alpha(gt.alpha - 0.2), target, calib)
    theta = np.arctan2(gt.center[0], gt.center[2])
    np.testing.assert_allclose(
        wrap_angle(refined.ry - refined.alpha - theta), 0.0, atol=1e-12
    )


def test_budget_and_arguments(calib, gt):
    target = enclosing_rect(calib, gt)
    start = gt.with_alpha(gt.alpha + 0.3)
    assert refine_alpha(start, target, calib, steps=0).alpha == start.alpha
    with pytest.raises(ValueError):
        refine_alpha(start, target, calib, steps=-1)
    with pytest.raises(ValueError):
        refine_alpha(start, target, calib, span=0.0)


def test_behind_camera_scores_minus_one(calib):
    box = Box3D.create((0.0, 0.0, 1.0), (1.0, 1.0, 4.0), ry=0.0)
    assert alignment(box, Box2D(cx=600.0, cy=180.0, w=10.0, h=10.0), calib) == -1.0
