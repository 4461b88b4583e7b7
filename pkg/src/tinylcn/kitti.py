"""
Readers and writers for the on-disk formats of the KITTI object benchmark:

- label files: one object per line, 15 whitespace-separated fields (16 with a
  detection score),
- calibration files: ``key: values`` lines, of which only the ``P2`` camera
  projection matrix is used,
- depth maps, stored as binary 16-bit PGM (``P5``, maxval 65535, big-endian
  samples) holding ``round(depth * 256)`` with 0 marking invalid pixels.
"""

from __future__ import annotations

__all__ = [
    "DEFAULT_CLASS_NAMES",
    "LabelParseError",
    "CalibParseError",
    "DepthFormatError",
    "LabelRecord",
    "parse_labels",
    "emit_labels",
    "read_labels",
    "write_labels",
    "parse_calib",
    "emit_calib",
    "read_calib",
    "to_box3d",
    "from_boxes",
    "DepthMap",
    "parse_depth",
    "emit_depth",
    "read_depth",
    "write_depth",
    "depth_to_tensor",
]

import dataclasses
import logging
from pathlib import Path
from typing import Any, Sequence

import jax.numpy as jnp
import numpy as np

from tinylcn.geometry import Box2D, Box3D, Calibration
from tinylcn.helpers import JAXArray, dataclass, field

logger = logging.getLogger(__name__)

DEFAULT_CLASS_NAMES = ("Background", "Car", "Pedestrian", "Cyclist")
DEPTH_SCALE = 256.0
DEPTH_MAXVAL = 65535


class LabelParseError(ValueError):
    """Raised for a malformed label line

    Args:
        lineno: The 1-based line number of the offending line.
        message: A description of the problem.
    """

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class CalibParseError(ValueError):
    pass


class DepthFormatError(ValueError):
    pass


@dataclass
class LabelRecord:
    """One object annotation or detection

    Args:
        type: The class name, e.g. ``"Car"`` or ``"DontCare"``.
        truncated: The truncation level in ``[0, 1]``.
        occluded: The occlusion state, one of ``0, 1, 2, 3``.
        alpha: The observation angle in radians.
        bbox: The 2D box ``(left, top, right, bottom)`` in pixels.
        dims: The 3D size ``(h, w, l)`` in meters, in file order.
        location: The 3D location ``(x, y, z)`` in camera coordinates.
        ry: The yaw around the camera y-axis in radians.
        score: The detection confidence, or ``None`` for ground truth.
    """

    type: str = field(pytree_node=False)
    truncated: float
    occluded: int = field(pytree_node=False)
    alpha: float
    bbox: tuple[float, float, float, float]
    dims: tuple[float, float, float]
    location: tuple[float, float, float]
    ry: float
    score: float | None = None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelRecord):
            return NotImplemented
        return dataclasses.astuple(self) == dataclasses.astuple(other)

    @property
    def is_dontcare(self) -> bool:
        return self.type == "DontCare"

    @property
    def height(self) -> float:
        """The height of the 2D box in pixels"""
        return self.bbox[3] - self.bbox[1]

    @property
    def box2d(self) -> Box2D:
        return Box2D.from_xyxy(*self.bbox)


def _parse_line(line: str, lineno: int) -> LabelRecord:
    parts = line.split()
    if len(parts) not in (15, 16):
        raise LabelParseError(lineno, f"expected 15 or 16 fields; got {len(parts)}")
    try:
        values = [float(p) for p in parts[1:]]
    except ValueError as e:
        raise LabelParseError(lineno, f"non-numeric field ({e})") from e
    occluded = values[1]
    if occluded != int(occluded):
        raise LabelParseError(lineno, f"occlusion must be an integer; got {parts[2]}")
    return LabelRecord(
        type=parts[0],
        truncated=values[0],
        occluded=int(occluded),
        alpha=values[2],
        bbox=tuple(values[3:7]),
        dims=tuple(values[7:10]),
        location=tuple(values[10:13]),
        ry=values[13],
        score=values[14] if len(values) == 15 else None,
    )


def parse_labels(text: str) -> list[LabelRecord]:
    """Parse the contents of a label file; blank lines are skipped

    Raises:
        LabelParseError: On a wrong field count or a non-numeric field.
    """
    return [
        _parse_line(line, lineno)
        for lineno, line in enumerate(text.splitlines(), start=1)
        if line.strip()
    ]


def _format(value: float, precision: int | None) -> str:
    if precision is None:
        return repr(float(value))
    return f"{value:.{precision}f}"


def emit_labels(records: Sequence[LabelRecord], precision: int | None = 2) -> str:
    """Format records as label file text

    Args:
        records: The records to write.
        precision: Decimal places for every real field, or ``None`` for the
            shortest representation that parses back to the same float.
    """
    lines = []
    for r in records:
        fields = [
            r.type,
            _format(r.truncated, precision),
            str(int(r.occluded)),
            _format(r.alpha, precision),
            *(_format(v, precision) for v in r.bbox),
            *(_format(v, precision) for v in r.dims),
            *(_format(v, precision) for v in r.location),
            _format(r.ry, precision),
        ]
        if r.score is not None:
            fields.append(_format(r.score, precision))
        lines.append(" ".join(fields))
    return "".join(line + "\n" for line in lines)


def read_labels(path: str | Path) -> list[LabelRecord]:
    return parse_labels(Path(path).read_text())


def write_labels(
    path: str | Path, records: Sequence[LabelRecord], precision: int | None = 2
) -> None:
    Path(path).write_text(emit_labels(records, precision))


def parse_calib(text: str) -> Calibration:
    """Extract the ``P2`` projection matrix from a calibration file

    Raises:
        CalibParseError: If there is no ``P2`` line or it has fewer than 12
            numeric values.
    """
    for line in text.splitlines():
        key, sep, rest = line.partition(":")
        if not sep or key.strip() != "P2":
            continue
        try:
            values = [float(v) for v in rest.split()]
        except ValueError as e:
            raise CalibParseError(f"Non-numeric value in the P2 line: {e}") from e
        if len(values) < 12:
            raise CalibParseError(f"The P2 line needs 12 values; got {len(values)}")
        try:
            return Calibration.from_values(values[:12])
        except ValueError as e:
            raise CalibParseError(str(e)) from e
    raise CalibParseError("No P2 line found")


def emit_calib(calib: Calibration, precision: int | None = None) -> str:
    values = np.asarray(calib.P, dtype=np.float64).ravel()
    return "P2: " + " ".join(_format(v, precision) for v in values) + "\n"


def read_calib(path: str | Path) -> Calibration:
    return parse_calib(Path(path).read_text())


def to_box3d(
    record: LabelRecord, class_names: Sequence[str] = DEFAULT_CLASS_NAMES
) -> Box3D:
    """Convert a record to a :class:`Box3D`, taking the pose from ``ry``

    Classes missing from ``class_names`` get ``class_id = -1``.
    """
    h, w, l = record.dims
    class_id = class_names.index(record.type) if record.type in class_names else -1
    score = 1.0 if record.score is None else record.score
    return Box3D.create(
        record.location, (w, h, l), ry=record.ry, score=score, class_id=class_id
    )


def from_boxes(box2d: Box2D, box3d: Box3D, name: str) -> LabelRecord:
    """Build a detection record from decoded boxes"""
    w, h, l = (float(v) for v in np.asarray(box3d.dims))
    return LabelRecord(
        type=name,
        truncated=0.0,
        occluded=0,
        alpha=float(box3d.alpha),
        bbox=tuple(float(v) for v in box2d.xyxy),
        dims=(h, w, l),
        location=tuple(float(v) for v in np.asarray(box3d.center)),
        ry=float(box3d.ry),
        score=float(box3d.score),
    )


@dataclass
class DepthMap:
    """A dense depth map in meters; zero marks pixels without a measurement

    Args:
        values: An ``(h, w)`` array of non-negative finite depths.
    """

    values: JAXArray

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValueError(f"Depth maps must be 2D; got shape {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("Depth values must be finite and non-negative")

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(np.shape(self.values))  # type: ignore

    @property
    def valid(self) -> np.ndarray:
        return np.asarray(self.values) > 0


def _header_tokens(raw: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DepthFormatError("Truncated PGM header")
        tokens.append(raw[start:pos])
    # Exactly one whitespace byte separates the header from the samples
    return tokens, pos + 1


def parse_depth(raw: bytes) -> DepthMap:
    """Decode a 16-bit binary PGM into a :class:`DepthMap`

    Raises:
        DepthFormatError: On a wrong magic number, a maxval other than 65535
            or a payload of the wrong size.
    """
    if raw[:2] != b"P5":
        raise DepthFormatError(f"Expected a binary PGM ('P5'); got {raw[:2]!r}")
    tokens, offset = _header_tokens(raw, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise DepthFormatError(f"Invalid PGM header {tokens!r}") from e
    if maxval != DEPTH_MAXVAL:
        raise DepthFormatError(f"Expected maxval {DEPTH_MAXVAL}; got {maxval}")
    payload = raw[offset:]
    expected = 2 * width * height
    if len(payload) != expected:
        raise DepthFormatError(
            f"Expected {expected} payload bytes for {width}x{height}; "
            f"got {len(payload)}"
        )
    stored = np.frombuffer(payload, dtype=">u2").reshape(height, width)
    return DepthMap(values=stored.astype(np.float64) / DEPTH_SCALE)


def emit_depth(depth: DepthMap) -> bytes:
    """Encode a depth map; depths are rounded to the nearest 1/256 m

    Raises:
        ValueError: If any depth exceeds the representable range.
    """
    values = np.asarray(depth.values, dtype=np.float64)
    stored = np.round(values * DEPTH_SCALE)
    if np.any(stored > DEPTH_MAXVAL):
        raise ValueError(
            f"Depths above {DEPTH_MAXVAL / DEPTH_SCALE} m cannot be stored"
        )
    height, width = values.shape
    header = f"P5\n{width} {height}\n{DEPTH_MAXVAL}\n".encode("ascii")
    return header + stored.astype(">u2").tobytes()


def read_depth(path: str | Path) -> DepthMap:
    return parse_depth(Path(path).read_bytes())


def write_depth(path: str | Path, depth: DepthMap) -> None:
    Path(path).write_bytes(emit_depth(depth))


def depth_to_tensor(depth: DepthMap, channels: int = 1) -> Any:
    """The depth map as an ``(1, channels, h, w)`` guidance tensor"""
    values = jnp.asarray(depth.values, dtype=jnp.float64)
    return jnp.broadcast_to(values, (1, channels) + values.shape)
