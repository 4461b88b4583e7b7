# mypy: ignore-errors

import numpy as np
import pytest

from tinylcn import kitti
from tinylcn.geometry import Box3D, Calibration

LABEL = (
    "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59"
)
CALIB = """P0: 721.5377 0 609.5593 0 0 721.5377 172.854 0 0 0 1 0
P1: 721.5377 0 609.5593 -387.5744 0 721.5377 172.854 0 0 0 1 0
P2: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 0.000000e+00 7.215377e+02 1.728540e+02 2.163791e-01 0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03
R0_rect: 1 0 0 0 1 0 0 0 1
"""  # noqa: E501


@pytest.fixture
def random():
    return np.random.default_rng(30144)


def test_parse_label():
    (record,) = kitti.parse_labels(LABEL + "\n")
    assert record.type == "Car"
    assert record.truncated == 0.0
    assert record.occluded == 0
    assert record.alpha == -1.58
    assert record.bbox == (587.01, 173.33, 614.12, 200.12)
    assert record.dims == (1.65, 1.67, 3.64)
    assert record.location == (-0.65, 1.71, 46.70)
    assert record.ry == -1.59
    assert record.score is None
    assert not record.is_dontcare
    np.testing.assert_allclose(record.height, 200.12 - 173.33)

    (detection,) = kitti.parse_labels(LABEL + " 0.93")
    assert detection.score == 0.93


def test_parse_blank_and_dontcare():
    assert kitti.parse_labels("") == []
    assert kitti.parse_labels("\n  \n") == []
    text = (
        "DontCare -1 -1 -10 503.89 169.71 590.61 190.13"
        " -1 -1 -1 -1000 -1000 -1000 -10\n"
    )
    (record,) = kitti.parse_labels(LABEL + "\n" + text)[1:]
    assert record.is_dontcare


def test_parse_label_errors():
    with pytest.raises(kitti.LabelParseError) as err:
        kitti.parse_labels(LABEL + "\n" + " ".join(LABEL.split()[:14]))
    assert err.value.lineno == 2

    fields = LABEL.split()
    fields[5] = "abc"
    with pytest.raises(kitti.LabelParseError) as err:
        kitti.parse_labels("\n" + " ".join(fields))
    assert err.value.lineno == 2

    fields = LABEL.split()
    fields[2] = "0.5"
    with pytest.raises(kitti.LabelParseError):
        kitti.parse_labels(" ".join(fields))
    assert issubclass(kitti.LabelParseError, ValueError)


def test_emit_labels():
    records = kitti.parse_labels(LABEL)
    assert kitti.emit_labels(records) == LABEL + "\n"
    assert kitti.parse_labels(kitti.emit_labels(records)) == records
    assert kitti.emit_labels([]) == ""


def test_emit_labels_full_precision(random):
    records = [
        kitti.LabelRecord(
            type="Pedestrian",
            truncated=float(random.uniform()),
            occluded=int(random.integers(0, 4)),
            alpha=float(random.uniform(-np.pi, np.pi)),
            bbox=tuple(float(v) for v in random.uniform(0, 1000, 4)),
            dims=tuple(float(v) for v in random.uniform(0.5, 4, 3)),
            location=tuple(float(v) for v in random.uniform(-10, 50, 3)),
            ry=float(random.uniform(-np.pi, np.pi)),
            score=float(random.uniform()),
        )
        for _ in range(10)
    ]
    assert kitti.parse_labels(kitti.emit_labels(records, precision=None)) == records

    rounded = kitti.parse_labels(kitti.emit_labels(records))
    for a, b in zip(rounded, records):
        np.testing.assert_allclose(a.bbox, b.bbox, atol=0.005 + 1e-9)
        np.testing.assert_allclose(a.location, b.location, atol=0.005 + 1e-9)


def test_label_files(tmp_path):
    records = kitti.parse_labels(LABEL)
    path = tmp_path / "000000.txt"
    kitti.write_labels(path, records)
    assert kitti.read_labels(path) == records


def test_parse_calib():
    calib = kitti.parse_calib(CALIB)
    np.testing.assert_allclose(calib.focal, (721.5377, 721.5377))
    np.testing.assert_allclose(calib.principal_point, (609.5593, 172.854))
    np.testing.assert_allclose(
        np.asarray(calib.P)[:, 3], (44.85728, 0.2163791, 0.002745884)
    )

    simple = kitti.parse_calib("P2: 700 0 600 0 0 700 180 0 0 0 1 0\n")
    np.testing.assert_allclose(simple.focal, (700.0, 700.0))
    np.testing.assert_allclose(simple.principal_point, (600.0, 180.0))


def test_parse_calib_errors():
    with pytest.raises(kitti.CalibParseError):
        kitti.parse_calib(CALIB.splitlines()[0])
    with pytest.raises(kitti.CalibParseError):
        kitti.parse_calib("P2: 700 0 600 0 0 700 180 0 0 0 1\n")
    with pytest.raises(kitti.CalibParseError):
        kitti.parse_calib("P2: 700 0 600 0 0 700 180 0 0 0 one 0\n")
    with pytest.raises(kitti.CalibParseError):
        kitti.parse_calib("P2: 0 0 600 0 0 700 180 0 0 0 1 0\n")


def test_emit_calib(tmp_path):
    calib = kitti.parse_calib(CALIB)
    text = kitti.emit_calib(calib)
    again = kitti.parse_calib(text)
    np.testing.assert_array_equal(np.asarray(again.P), np.asarray(calib.P))

    path = tmp_path / "000000.txt"
    path.write_text(text)
    np.testing.assert_array_equal(np.asarray(kitti.read_calib(path).P), calib.P)


def test_box_conversion():
    (record,) = kitti.parse_labels(LABEL)
    box = kitti.to_box3d(record)
    assert isinstance(box, Box3D)
    assert box.class_id == 1
    np.testing.assert_allclose(box.dims, (1.67, 1.65, 3.64))
    np.testing.assert_allclose(box.center, record.location)
    np.testing.assert_allclose(box.ry, -1.59)
    assert box.score == 1.0

    (dontcare,) = kitti.parse_labels(
        "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 1 1 1 -1000 -1000 -1000 -10"
    )
    assert kitti.to_box3d(dontcare).class_id == -1

    back = kitti.from_boxes(record.box2d, box, "Car")
    np.testing.assert_allclose(back.bbox, record.bbox)
    np.testing.assert_allclose(back.dims, record.dims)
    np.testing.assert_allclose(back.location, record.location)
    np.testing.assert_allclose(back.ry, record.ry)
    np.testing.assert_allclose(back.alpha, box.alpha)
    assert back.type == "Car"
    assert back.score == 1.0


def _pgm(width, height, samples, maxval=65535):
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    return header + np.asarray(samples, dtype=">u2").tobytes()


def test_parse_depth():
    depth = kitti.parse_depth(_pgm(3, 2, [256, 0, 512, 1, 65535, 128]))
    assert depth.shape == (2, 3)
    np.testing.assert_array_equal(
        depth.values, [[1.0, 0.0, 2.0], [1 / 256, 65535 / 256, 0.5]]
    )
    np.testing.assert_array_equal(
        depth.valid, [[True, False, True], [True, True, True]]
    )

    commented = b"P5\n# a comment\n3 2\n65535\n" + np.zeros(6, ">u2").tobytes()
    assert kitti.parse_depth(commented).shape == (2, 3)


def test_parse_depth_errors():
    with pytest.raises(kitti.DepthFormatError):
        kitti.parse_depth(b"P2\n1 1\n65535\n0")
    with pytest.raises(kitti.DepthFormatError):
        kitti.parse_depth(_pgm(2, 2, [1, 2, 3, 4], maxval=255))
    with pytest.raises(kitti.DepthFormatError):
        kitti.parse_depth(_pgm(2, 2, [1, 2, 3]))
    with pytest.raises(kitti.DepthFormatError):
        kitti.parse_depth(b"P5\n2")


def test_depth_files(tmp_path, random):
    values = random.uniform(0, 80, (5, 7))
    values[0, 0] = 0.0
    depth = kitti.DepthMap(values)
    path = tmp_path / "depth.png"
    kitti.write_depth(path, depth)
    again = kitti.read_depth(path)
    np.testing.assert_allclose(again.values, values, rtol=0, atol=1 / 512)
    assert not again.valid[0, 0]

    with pytest.raises(ValueError):
        kitti.emit_depth(kitti.DepthMap(np.full((2, 2), 300.0)))
    with pytest.raises(ValueError):
        kitti.DepthMap(np.full((2, 2), -1.0))
    with pytest.raises(ValueError):
        kitti.DepthMap(np.zeros(4))


def test_depth_to_tensor():
    depth = kitti.DepthMap(np.arange(6, dtype=float).reshape(2, 3))
    tensor = kitti.depth_to_tensor(depth, channels=4)
    assert tensor.shape == (1, 4, 2, 3)
    np.testing.assert_array_equal(tensor[0, 2], depth.values)

