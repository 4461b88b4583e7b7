# mypy: ignore-errors

import numpy as np
import pytest

from tinylcn.codec import OutputVector
from tinylcn.losses import (
    Components,
    batch_loss,
    component_losses,
    log_target_score,
    smooth_l1,
    target_score,
    total_loss,
)


@pytest.fixture
def random():
    return np.random.default_rng(5823)


@pytest.fixture
def target(random):
    scores = np.zeros(4)
    scores[1] = 1.0
    return OutputVector(
        t2d=random.normal(size=4),
        tP=random.normal(size=2),
        t3d=random.normal(size=5),
        tC=random.normal(size=(8, 3)),
        scores=scores,
    )


def test_smooth_l1():
    np.testing.assert_allclose(smooth_l1(0.0), 0.0)
    np.testing.assert_allclose(smooth_l1(0.5), 0.125)
    np.testing.assert_allclose(smooth_l1(2.0), 1.5)
    np.testing.assert_allclose(smooth_l1(-2.0), 1.5)
    np.testing.assert_allclose(smooth_l1([0.5, -2.0]), 1.625)
    np.testing.assert_allclose(smooth_l1(1 - 1e-8), 0.5, atol=1e-7)
    np.testing.assert_allclose(smooth_l1(1 + 1e-8), 0.5, atol=1e-7)


def test_class_term():
    c = component_losses(
        OutputVector.zeros(4), OutputVector.zeros(4), np.exp(-1.0)
    )
    np.testing.assert_allclose(c.class_loss, 1.0)
    np.testing.assert_allclose(c.loss_2d, 0.0)


def test_focal_weight():
    components = Components(0.5, 0.5, 0.5, 0.5)
    np.testing.assert_allclose(total_loss(components, 0.75, 0.5).total, 1.0)
    np.testing.assert_allclose(total_loss(components, 0.75, 0.0).total, 2.0)
    np.testing.assert_allclose(total_loss(components, 1.0, 0.5).total, 0.0)

    totals = [
        float(total_loss(components, s, 0.5).total) for s in (0.1, 0.3, 0.6, 0.9)
    ]
    assert np.all(np.diff(totals) < 0)

    breakdown = total_loss(components, 0.75, 0.5)
    assert set(breakdown.as_dict()) == {
        "class_loss",
        "loss_2d",
        "loss_3d",
        "loss_corner",
        "focal_weight",
        "total",
    }
    np.testing.assert_allclose(breakdown.as_dict()["focal_weight"], 0.5)


def test_perfect_prediction(target):
    c = component_losses(target, target, 1.0, corner_depth="corner")
    np.testing.assert_allclose(
        [c.class_loss, c.loss_2d, c.loss_3d, c.loss_corner], 0.0, atol=1e-15
    )

    # Corner depths are compared to the center depth
    c = component_losses(target, target, 1.0, corner_depth="center")
    expected = smooth_l1(np.asarray(target.tC)[:, 2] - target.t3d[0]) / 8
    np.testing.assert_allclose(c.loss_corner, expected)


def test_single_corner_offset(target):
    tC = np.array(target.tC)
    tC[3, 0] += 0.5
    pred = target.replace(tC=tC)
    c = component_losses(pred, target, 1.0, corner_depth="corner")
    np.testing.assert_allclose(c.loss_corner, 0.125 / 8)
    np.testing.assert_allclose(c.loss_3d, 0.0, atol=1e-15)


def test_pose_difference_wraps(target):
    t3d = np.array(target.t3d)
    t3d[4] = np.pi - 0.05
    target = target.replace(t3d=t3d)
    pred = target.replace(t3d=np.concatenate([t3d[:4], [-np.pi + 0.05]]))
    c = component_losses(pred, target, 1.0, corner_depth="corner")
    np.testing.assert_allclose(c.loss_3d, 0.5 * 0.1**2)


def test_target_score_default(target):
    scores = np.array([0.0, 2.0, 0.0, 0.0])
    pred = target.replace(scores=scores)
    s_t = target_score(pred, 1)
    np.testing.assert_allclose(s_t, np.exp(2) / (np.exp(2) + 3))
    c = component_losses(pred, target)
    np.testing.assert_allclose(c.class_loss, -np.log(s_t))
    with pytest.raises(ValueError):
        target_score(pred, 4)


def test_batch(target):
    background = OutputVector.zeros(4)
    b = batch_loss([background], [None])
    np.testing.assert_allclose(b.class_loss, np.log(4.0))
    np.testing.assert_allclose(b.total, np.sqrt(0.75) * np.log(4.0))
    np.testing.assert_allclose([b.loss_2d, b.loss_3d, b.loss_corner], 0.0)

    pred = target.replace(t2d=np.asarray(target.t2d) + 0.25)
    single = total_loss(
        component_losses(pred, target, target_score(pred, 1)),
        target_score(pred, 1),
    )
    both = batch_loss([pred, background], [target, None])
    np.testing.assert_allclose(both.total, single.total + b.total)
    np.testing.assert_allclose(both.loss_2d, 4 * 0.5 * 0.25**2)

    with pytest.raises(ValueError):
        batch_loss([pred], [])


def test_extreme_logits(target):
    pred = OutputVector.zeros(4).replace(scores=np.array([-800.0, 0.0, 0.0, 0.0]))
    b = batch_loss([pred], [None])
    np.testing.assert_allclose(b.class_loss, 800.0 + np.log(3.0))
    np.testing.assert_allclose(b.focal_weight, 1.0)
    np.testing.assert_allclose(b.total, b.class_loss)

    pred = target.replace(scores=np.array([0.0, -900.0, 0.0, 0.0]))
    fg = batch_loss([pred], [target])
    np.testing.assert_allclose(fg.class_loss, 900.0 + np.log(3.0))
    assert np.isfinite(float(fg.total))
    c = component_losses(pred, target)
    np.testing.assert_allclose(c.class_loss, fg.class_loss)
    assert target_score(pred, 1) == 0.0
    np.testing.assert_allclose(log_target_score(pred, 1), -900.0 - np.log(3.0))


def test_invalid_arguments(target):
    components = Components(0.0, 0.0, 0.0, 0.0)
    for s_t in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            total_loss(components, s_t)
        with pytest.raises(ValueError):
            component_losses(target, target, s_t)
    with pytest.raises(ValueError):
        total_loss(components, 0.5, gamma=-1.0)
    with pytest.raises(ValueError):
        component_losses(target, target, 0.5, corner_depth="nearest")
