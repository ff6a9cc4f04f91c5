"""Binary VAM layout.

Little-endian, no padding::

    header      u8 protocol_version | u32 station_id | u16 generation_time (ms mod 65536)
    basic_hf    u8 station_type | i32 ref_lat | i32 ref_lon (1e-7 deg)
                | u16 heading (0.1 deg) | u16 speed (cm/s)
    tag         u8 container tag (0 none, 1 path, 2 ellipse, 3 polygon)
    payload     tag 1: past path then predicted path,
                       each u8 count + count * (i32 dx, i32 dy) in cm
                tag 2: 5 * f32 (dx, dy in m; sxx, sxy, syy in m^2)
                tag 3: u8 count + count * (i16 dx, i16 dy) in cm

The 21-byte prefix is shared by every message, so a message with an ellipse
container is always 41 bytes regardless of how many points were predicted.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Union

import numpy as np

HEADER = struct.Struct("<BIH")
BASIC_HF = struct.Struct("<BiiHH")
TAG = struct.Struct("<B")
COUNT = struct.Struct("<B")
PATH_POINT = struct.Struct("<ii")
ELLIPSE = struct.Struct("<5f")
POLY_VERTEX = struct.Struct("<hh")

PREFIX_BYTES = HEADER.size + BASIC_HF.size + TAG.size
MAX_PAST_POINTS = 23
MAX_PREDICTED_POINTS = 40
POLY_OFFSET_LIMIT_CM = 32767

STATION_PEDESTRIAN = 1
STATION_CYCLIST = 2

_I32 = (-(2**31), 2**31 - 1)


class CodecError(ValueError):
    pass


class ContainerTag(enum.IntEnum):
    NONE = 0
    PATH = 1
    ELLIPSE = 2
    POLYGON = 3


@dataclass(frozen=True)
class VamHeader:
    protocol_version: int
    station_id: int
    generation_time: int


@dataclass(frozen=True)
class BasicHfContainer:
    station_type: int
    ref_lat: int
    ref_lon: int
    heading: int
    speed: int


@dataclass(frozen=True)
class PathContainer:
    """Points as (dx, dy) centimetre offsets from the reference position."""

    points: tuple[tuple[int, int], ...]

    @classmethod
    def from_offsets(cls, offsets_m) -> "PathContainer":
        return cls(tuple((_cm(dx), _cm(dy)) for dx, dy in offsets_m))


@dataclass(frozen=True)
class EllipseContainer:
    dx: float
    dy: float
    sxx: float
    sxy: float
    syy: float

    @classmethod
    def from_values(cls, dx, dy, sxx, sxy, syy) -> "EllipseContainer":
        """Round every field to single precision so the value survives a roundtrip."""
        return cls(*(float(np.float32(v)) for v in (dx, dy, sxx, sxy, syy)))


@dataclass(frozen=True)
class PolygonContainer:
    vertices: tuple[tuple[int, int], ...]

    @classmethod
    def from_offsets(cls, offsets_m) -> "PolygonContainer":
        return cls(tuple((_cm(dx), _cm(dy)) for dx, dy in offsets_m))


Container = Union[None, tuple, EllipseContainer, PolygonContainer]


@dataclass(frozen=True)
class VamMessage:
    """One VAM. ``container`` is None, a (past, predicted) pair of
    :class:`PathContainer`, an :class:`EllipseContainer` or a :class:`PolygonContainer`."""

    header: VamHeader
    basic_hf: BasicHfContainer
    container: Container = None

    @property
    def container_tag(self) -> ContainerTag:
        c = self.container
        if c is None:
            return ContainerTag.NONE
        if isinstance(c, EllipseContainer):
            return ContainerTag.ELLIPSE
        if isinstance(c, PolygonContainer):
            return ContainerTag.POLYGON
        if isinstance(c, tuple) and len(c) == 2 and all(isinstance(p, PathContainer) for p in c):
            return ContainerTag.PATH
        raise CodecError(f"container: unsupported value {type(c).__name__}")

    @property
    def size(self) -> int:
        return encoded_size(self.container_tag, *_counts(self))


def _cm(v: float) -> int:
    return int(round(float(v) * 100.0))


def _counts(m: VamMessage) -> tuple[int, ...]:
    tag = m.container_tag
    if tag is ContainerTag.PATH:
        return (len(m.container[0].points), len(m.container[1].points))
    if tag is ContainerTag.POLYGON:
        return (len(m.container.vertices),)
    return ()


def encoded_size(tag: ContainerTag, *counts: int) -> int:
    """Encoded message length from the tag and point/vertex counts alone."""
    tag = ContainerTag(tag)
    if tag is ContainerTag.NONE:
        return PREFIX_BYTES
    if tag is ContainerTag.ELLIPSE:
        return PREFIX_BYTES + ELLIPSE.size
    if tag is ContainerTag.PATH:
        past, pred = counts
        return PREFIX_BYTES + 2 + PATH_POINT.size * (past + pred)
    (v,) = counts
    return PREFIX_BYTES + 1 + POLY_VERTEX.size * v


def payload_size(form: str, n: int = 0, with_sigmas: bool = False) -> int:
    """Representation payload in bytes, container framing excluded.

    ``n`` is T for ``"vector"`` and V for ``"polygon"``; ignored for ``"ellipse"``.
    """
    if form == "vector":
        if n < 1:
            raise ValueError(f"vector payload needs T >= 1, got {n}")
        return 8 * n * (2 if with_sigmas else 1)
    if form == "ellipse":
        return ELLIPSE.size
    if form == "polygon":
        if not 3 <= n <= 255:
            raise ValueError(f"polygon payload needs 3 <= V <= 255, got {n}")
        return POLY_VERTEX.size * n
    raise ValueError(f"unknown representation form {form!r}")


# -- validation --------------------------------------------------------------


def _in(name: str, v, lo: int, hi: int) -> None:
    if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
        raise CodecError(f"{name}: expected integer, got {v!r}")
    if not lo <= v <= hi:
        raise CodecError(f"{name}: {v} outside [{lo}, {hi}]")


def validate(m: VamMessage) -> None:
    h, b = m.header, m.basic_hf
    _in("header.protocol_version", h.protocol_version, 0, 255)
    _in("header.station_id", h.station_id, 0, 2**32 - 1)
    _in("header.generation_time", h.generation_time, 0, 65535)
    _in("basic_hf.station_type", b.station_type, 0, 255)
    _in("basic_hf.ref_lat", b.ref_lat, -900_000_000, 900_000_000)
    _in("basic_hf.ref_lon", b.ref_lon, -1_800_000_000, 1_800_000_000)
    _in("basic_hf.heading", b.heading, 0, 3599)
    _in("basic_hf.speed", b.speed, 0, 65534)
    tag = m.container_tag
    c = m.container
    if tag is ContainerTag.PATH:
        for name, path, cap in (("past", c[0], MAX_PAST_POINTS), ("predicted", c[1], MAX_PREDICTED_POINTS)):
            if len(path.points) > cap:
                raise CodecError(f"path.{name}.point_count: {len(path.points)} exceeds {cap}")
            for i, (dx, dy) in enumerate(path.points):
                _in(f"path.{name}.points[{i}].dx", dx, *_I32)
                _in(f"path.{name}.points[{i}].dy", dy, *_I32)
    elif tag is ContainerTag.ELLIPSE:
        vals = (c.dx, c.dy, c.sxx, c.sxy, c.syy)
        for name, v in zip(("dx", "dy", "sxx", "sxy", "syy"), vals):
            if not np.isfinite(v):
                raise CodecError(f"ellipse.{name}: non-finite value {v!r}")
            if float(np.float32(v)) != v:
                raise CodecError(f"ellipse.{name}: {v!r} is not representable in single precision")
        if c.sxx < 0 or c.syy < 0 or c.sxx * c.syy - c.sxy * c.sxy < 0:
            raise CodecError(
                f"ellipse.cov: ({c.sxx}, {c.sxy}, {c.syy}) is not positive semidefinite"
            )
    elif tag is ContainerTag.POLYGON:
        n = len(c.vertices)
        if not 3 <= n <= 255:
            raise CodecError(f"polygon.vertex_count: {n} outside [3, 255]")
        for i, (dx, dy) in enumerate(c.vertices):
            _in(f"polygon.vertices[{i}].dx", dx, -POLY_OFFSET_LIMIT_CM, POLY_OFFSET_LIMIT_CM)
            _in(f"polygon.vertices[{i}].dy", dy, -POLY_OFFSET_LIMIT_CM, POLY_OFFSET_LIMIT_CM)


# -- encode / decode ---------------------------------------------------------


def encode(m: VamMessage) -> bytes:
    validate(m)
    h, b = m.header, m.basic_hf
    tag = m.container_tag
    out = bytearray()
    out += HEADER.pack(h.protocol_version, h.station_id, h.generation_time)
    out += BASIC_HF.pack(b.station_type, b.ref_lat, b.ref_lon, b.heading, b.speed)
    out += TAG.pack(tag)
    c = m.container
    if tag is ContainerTag.PATH:
        for path in c:
            out += COUNT.pack(len(path.points))
            for dx, dy in path.points:
                out += PATH_POINT.pack(dx, dy)
    elif tag is ContainerTag.ELLIPSE:
        out += ELLIPSE.pack(c.dx, c.dy, c.sxx, c.sxy, c.syy)
    elif tag is ContainerTag.POLYGON:
        out += COUNT.pack(len(c.vertices))
        for v in c.vertices:
            out += POLY_VERTEX.pack(*v)
    return bytes(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(bytes(buf))
        self.pos = 0

    def read(self, st: struct.Struct, what: str):
        end = self.pos + st.size
        if end > len(self.buf):
            raise CodecError(
                f"{what}: truncated buffer, need {end} bytes, have {len(self.buf)}"
            )
        vals = st.unpack_from(self.buf, self.pos)
        self.pos = end
        return vals


def decode(buf: bytes) -> VamMessage:
    r = _Reader(buf)
    header = VamHeader(*r.read(HEADER, "header"))
    basic = BasicHfContainer(*r.read(BASIC_HF, "basic_hf"))
    (raw_tag,) = r.read(TAG, "container_tag")
    try:
        tag = ContainerTag(raw_tag)
    except ValueError:
        raise CodecError(f"container_tag: unknown value {raw_tag}") from None
    container: Container = None
    if tag is ContainerTag.PATH:
        paths = []
        for name in ("past", "predicted"):
            (n,) = r.read(COUNT, f"path.{name}.point_count")
            paths.append(PathContainer(tuple(r.read(PATH_POINT, f"path.{name}.points") for _ in range(n))))
        container = tuple(paths)
    elif tag is ContainerTag.ELLIPSE:
        container = EllipseContainer(*(float(v) for v in r.read(ELLIPSE, "ellipse")))
    elif tag is ContainerTag.POLYGON:
        (n,) = r.read(COUNT, "polygon.vertex_count")
        container = PolygonContainer(tuple(r.read(POLY_VERTEX, "polygon.vertices") for _ in range(n)))
    if r.pos != len(r.buf):
        raise CodecError(f"trailing bytes: {len(r.buf) - r.pos} after offset {r.pos}")
    m = VamMessage(header, basic, container)
    validate(m)
    return m


# -- golden vectors ----------------------------------------------------------


def golden_messages() -> dict[str, VamMessage]:
    """One canonical message per container kind; their encodings are normative."""
    header = VamHeader(3, 0x0A0B0C0D, 12345)
    basic = BasicHfContainer(STATION_CYCLIST, 566634000, 128782000, 900, 500)
    past = PathContainer(tuple((-50 * k, 3 * k) for k in range(MAX_PAST_POINTS - 1, -1, -1)))
    pred = PathContainer(tuple((125 * k, -k * k) for k in range(1, MAX_PREDICTED_POINTS + 1)))
    return {
        "hf_only": VamMessage(VamHeader(3, 7, 0), BasicHfContainer(STATION_PEDESTRIAN, -337000000, -707000000, 0, 0)),
        "path": VamMessage(header, basic, (past, pred)),
        "ellipse": VamMessage(header, basic, EllipseContainer.from_values(50.0, -0.25, 0.0625, 0.0, 0.01)),
        "polygon": VamMessage(
            header,
            basic,
            PolygonContainer(((5025, 0), (5018, 17), (5000, 25), (4982, 17), (4975, 0), (4982, -17), (5000, -25), (5018, -17))),
        ),
    }


def to_hex(data: bytes, width: int = 16) -> str:
    return "".join(data[i:i + width].hex() + "\n" for i in range(0, len(data), width))


def from_hex(text: str) -> bytes:
    return bytes.fromhex("".join(text.split()))


def first_difference(a: bytes, b: bytes) -> int | None:
    """Offset of the first differing byte, or None when equal."""
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return i
    if len(a) != len(b):
        return min(len(a), len(b))
    return None
