# mypy: ignore-errors

import numpy as np
import pytest

from tinylcn.geometry import (
    Box2D,
    Box3D,
    DegenerateBoxError,
    iou2d,
    iou2d_matrix,
    iou3d,
    iou_bev,
    rotation_y,
)
from tinylcn.geometry.iou import bev_polygon, clip_polygon, polygon_area


@pytest.fixture
def random():
    return np.random.default_rng(60193)


def test_iou2d_examples():
    a = Box2D.from_xyxy(0.0, 0.0, 1.0, 1.0)
    np.testing.assert_allclose(iou2d(a, a), 1.0)
    np.testing.assert_allclose(iou2d(a, Box2D.from_xyxy(2.0, 2.0, 3.0, 3.0)), 0.0)
    np.testing.assert_allclose(iou2d(a, Box2D.from_xyxy(0.5, 0.0, 1.5, 1.0)), 1 / 3)


def test_iou2d_matrix(random):
    lo = random.uniform(0, 50, (6, 2))
    a = np.concatenate([lo, lo + random.uniform(1, 30, (6, 2))], axis=1)
    lo = random.uniform(0, 50, (4, 2))
    b = np.concatenate([lo, lo + random.uniform(1, 30, (4, 2))], axis=1)
    m = iou2d_matrix(a, b)
    assert m.shape == (6, 4)
    assert np.all((m >= 0) & (m <= 1))
    np.testing.assert_allclose(iou2d_matrix(b, a), m.T)
    for i in range(6):
        for j in range(4):
            np.testing.assert_allclose(
                iou2d(Box2D.from_xyxy(*a[i]), Box2D.from_xyxy(*b[j])), m[i, j]
            )
    np.testing.assert_allclose(np.diag(iou2d_matrix(a, a)), 1.0)


def test_polygon_helpers():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    assert polygon_area(square) == 1.0
    assert polygon_area(square[::-1]) == -1.0
    np.testing.assert_allclose(polygon_area(clip_polygon(square, square)), 1.0)
    shifted = square + [0.5, 0.25]
    np.testing.assert_allclose(polygon_area(clip_polygon(square, shifted)), 0.375)
    assert len(clip_polygon(square, square + 5)) == 0


def test_bev_polygon_is_counter_clockwise(random):
    for _ in range(10):
        box = Box3D.create(
            (random.uniform(-5, 5), 1.0, random.uniform(5, 30)),
            random.uniform(0.5, 4, 3),
            ry=random.uniform(-np.pi, np.pi),
        )
        poly = bev_polygon(box)
        assert poly.shape == (4, 2)
        np.testing.assert_allclose(
            polygon_area(poly), box.dims[0] * box.dims[2], rtol=1e-12
        )


def test_identical_boxes():
    box = Box3D.create((1.0, 1.5, 20.0), (1.6, 1.5, 3.9), ry=0.3)
    np.testing.assert_allclose(iou3d(box, box), 1.0, atol=1e-12)
    np.testing.assert_allclose(iou_bev(box, box), 1.0, atol=1e-12)


def test_stacked_boxes():
    a = Box3D.create((0.0, 0.0, 10.0), (2.0, 1.0, 2.0), ry=0.0)
    b = Box3D.create((0.0, -1.5, 10.0), (2.0, 0.5, 2.0), ry=0.0)
    assert iou3d(a, b) == 0.0
    np.testing.assert_allclose(iou_bev(a, b), 1.0, atol=1e-12)


def test_rotated_square():
    a = Box3D.create((0.0, 0.0, 10.0), (2.0, 1.0, 2.0), ry=0.0)
    b = Box3D.create((0.0, 0.0, 10.0), (2.0, 1.0, 2.0), ry=np.pi / 4)
    np.testing.assert_allclose(iou_bev(a, b), 1 / np.sqrt(2), rtol=1e-12)
    np.testing.assert_allclose(iou3d(a, b), 1 / np.sqrt(2), rtol=1e-12)


def test_degenerate_footprint():
    flat = Box3D(
        center=np.array([0.0, 0.0, 10.0]),
        dims=np.array([0.0, 1.0, 2.0]),
        ry=0.0,
        alpha=0.0,
    )
    box = Box3D.create((0.0, 0.0, 10.0), (1.0, 1.0, 2.0), ry=0.0)
    with pytest.raises(DegenerateBoxError):
        iou3d(flat, box)
    with pytest.raises(DegenerateBoxError):
        iou_bev(box, flat)


def _inside(points, box):
    center = np.asarray(box.center)
    w, h, l = np.asarray(box.dims)
    local = (points - center) @ np.asarray(rotation_y(box.ry))
    return (
        (np.abs(local[:, 0]) <= w / 2)
        & (np.abs(local[:, 2]) <= l / 2)
        & (points[:, 1] >= center[1] - h)
        & (points[:, 1] <= center[1])
    )


def _monte_carlo_iou(a, b, random, samples=1_000_000):
    footprint = np.concatenate([bev_polygon(a), bev_polygon(b)])
    bottom = max(a.center[1], b.center[1])
    top = min(a.center[1] - a.dims[1], b.center[1] - b.dims[1])
    lo = np.array([footprint[:, 0].min(), top, footprint[:, 1].min()])
    hi = np.array([footprint[:, 0].max(), bottom, footprint[:, 1].max()])
    points = random.uniform(lo, hi, (samples, 3))
    in_a = _inside(points, a)
    in_b = _inside(points, b)
    both = np.sum(in_a & in_b)
    return both / (np.sum(in_a) + np.sum(in_b) - both)


def test_monte_carlo_oracle(random):
    a = Box3D.create((0.0, 1.0, 12.0), (2.0, 1.5, 4.0), ry=0.0)
    b = Box3D.create((0.0, 1.0, 12.0), (1.5, 1.2, 1.5), ry=np.pi / 4)
    np.testing.assert_allclose(iou3d(a, b), _monte_carlo_iou(a, b, random), atol=0.01)

    for _ in range(20):
        center = np.array(
            [random.uniform(-3, 3), random.uniform(0, 2), random.uniform(8, 30)]
        )
        a = Box3D.create(
            center, random.uniform(1, 4, 3), ry=random.uniform(-np.pi, np.pi)
        )
        b = Box3D.create(
            center + random.uniform(-1, 1, 3) * [1.0, 0.3, 1.0],
            random.uniform(1, 4, 3),
            ry=random.uniform(-np.pi, np.pi),
        )
        expect = _monte_carlo_iou(a, b, random)
        got = iou3d(a, b)
        np.testing.assert_allclose(got, expect, atol=0.01)
        np.testing.assert_allclose(iou3d(b, a), got, atol=1e-12)
        assert 0 <= got <= 1
