"""Minimal GDSII stream I/O: libraries of cells holding boundary elements.

Only what an exposure plan needs is supported (HEADER through ENDLIB with
BOUNDARY elements).  The reader skips anything else with a warning.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from datetime import datetime
from typing import BinaryIO, Iterable, Sequence

from .errors import GdsParseError, GdsRangeError, InvalidInputError

# Record types: (record id << 8) | data type.
HEADER = 0x0002
BGNLIB = 0x0102
LIBNAME = 0x0206
UNITS = 0x0305
ENDLIB = 0x0400
BGNSTR = 0x0502
STRNAME = 0x0606
ENDSTR = 0x0700
BOUNDARY = 0x0800
PATH = 0x0900
SREF = 0x0A00
AREF = 0x0B00
TEXT = 0x0C00
LAYER = 0x0D02
DATATYPE = 0x0E02
XY = 0x1003
ENDEL = 0x1100
NODE = 0x1500
BOX = 0x2D00

_ELEMENT_STARTS = {BOUNDARY, PATH, SREF, AREF, TEXT, NODE, BOX}
_NAMES = {
    HEADER: "HEADER", BGNLIB: "BGNLIB", LIBNAME: "LIBNAME", UNITS: "UNITS",
    ENDLIB: "ENDLIB", BGNSTR: "BGNSTR", STRNAME: "STRNAME", ENDSTR: "ENDSTR",
    BOUNDARY: "BOUNDARY", PATH: "PATH", SREF: "SREF", AREF: "AREF",
    TEXT: "TEXT", LAYER: "LAYER", DATATYPE: "DATATYPE", XY: "XY",
    ENDEL: "ENDEL", NODE: "NODE", BOX: "BOX",
}

GDS_VERSION = 600
FIXED_TIMESTAMP = datetime(1970, 1, 1, 0, 0, 0)
MAX_RECORD = 0xFFFF
# XY payload of a single record: (65535 - 4) // 8 points, closure included.
MAX_POINTS = (MAX_RECORD - 4) // 8
INT32 = (-(2**31), 2**31 - 1)


@dataclass(frozen=True)
class Boundary:
    """Closed polygon in database units: first vertex repeated last."""

    layer: int
    datatype: int
    points: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pts = tuple((int(x), int(y)) for x, y in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 4 or pts[0] != pts[-1]:
            raise InvalidInputError("boundary must be a closed loop of at least 4 points")
        if not 0 <= self.layer <= 32767 or not 0 <= self.datatype <= 32767:
            raise InvalidInputError(f"layer/datatype out of range: {self.layer}/{self.datatype}")

    @classmethod
    def from_polygon(cls, layer: int, vertices: Iterable[Sequence[int]], datatype: int = 0):
        pts = [tuple(v) for v in vertices]
        if pts and pts[0] != pts[-1]:
            pts.append(pts[0])
        return cls(layer, datatype, tuple(pts))


@dataclass
class GdsCell:
    name: str
    boundaries: list[Boundary] = field(default_factory=list)


@dataclass
class GdsLibrary:
    """``unit_in_meters`` is the database unit, ``user_unit`` the user unit."""

    name: str
    cells: list[GdsCell] = field(default_factory=list)
    unit_in_meters: float = 1e-9
    user_unit: float = 1e-6

    def layers(self) -> set[int]:
        return {b.layer for c in self.cells for b in c.boundaries}


# -- excess-64 reals --------------------------------------------------------

def encode_real8(value: float) -> bytes:
    """8-byte GDSII real: sign bit, 7-bit base-16 exponent biased by 64, 56-bit mantissa."""
    if value == 0:
        return b"\x00" * 8
    sign = 0x80 if value < 0 else 0
    mag = abs(value)
    exponent = 64
    while mag >= 1:
        mag /= 16
        exponent += 1
    while mag < 1 / 16:
        mag *= 16
        exponent -= 1
    if not 0 <= exponent <= 127:
        raise GdsRangeError(f"{value!r} not representable as a GDSII real")
    mantissa = int(round(mag * 2**56))
    if mantissa >= 2**56:
        mantissa >>= 4
        exponent += 1
    return bytes([sign | exponent]) + mantissa.to_bytes(7, "big")


def decode_real8(data: bytes) -> float:
    sign = -1.0 if data[0] & 0x80 else 1.0
    exponent = (data[0] & 0x7F) - 64
    mantissa = int.from_bytes(data[1:8], "big")
    return sign * mantissa / 2**56 * 16.0**exponent


# -- writer -----------------------------------------------------------------

def _record(rtype: int, payload: bytes = b"") -> bytes:
    if len(payload) % 2:
        payload += b"\x00"
    length = len(payload) + 4
    if length > MAX_RECORD:
        raise GdsRangeError(f"{_NAMES.get(rtype, hex(rtype))} record too long ({length} bytes)")
    return struct.pack(">HH", length, rtype) + payload


def _ascii(text: str) -> bytes:
    return text.encode("ascii")


def _timestamp(ts: datetime) -> tuple[int, ...]:
    return (ts.year, ts.month, ts.day, ts.hour, ts.minute, ts.second)


def write_gds(
    lib: GdsLibrary,
    sink: BinaryIO | None = None,
    timestamp: datetime = FIXED_TIMESTAMP,
) -> bytes:
    """Serialize ``lib``; also writes to ``sink`` when one is given."""
    stamp = _timestamp(timestamp) * 2
    out = [
        _record(HEADER, struct.pack(">h", GDS_VERSION)),
        _record(BGNLIB, struct.pack(">12h", *stamp)),
        _record(LIBNAME, _ascii(lib.name)),
        _record(
            UNITS,
            encode_real8(lib.unit_in_meters / lib.user_unit) + encode_real8(lib.unit_in_meters),
        ),
    ]
    lo, hi = INT32
    for cell in lib.cells:
        out.append(_record(BGNSTR, struct.pack(">12h", *stamp)))
        out.append(_record(STRNAME, _ascii(cell.name)))
        for i, b in enumerate(cell.boundaries):
            if len(b.points) > MAX_POINTS:
                raise GdsRangeError(
                    f"cell {cell.name} polygon {i}: {len(b.points)} points exceed "
                    f"the {MAX_POINTS}-point XY record limit"
                )
            flat = [c for p in b.points for c in p]
            if any(c < lo or c > hi for c in flat):
                raise GdsRangeError(
                    f"cell {cell.name} polygon {i} on layer {b.layer}: coordinate beyond 32-bit range"
                )
            out.append(_record(BOUNDARY))
            out.append(_record(LAYER, struct.pack(">h", b.layer)))
            out.append(_record(DATATYPE, struct.pack(">h", b.datatype)))
            out.append(_record(XY, struct.pack(f">{len(flat)}i", *flat)))
            out.append(_record(ENDEL))
        out.append(_record(ENDSTR))
    out.append(_record(ENDLIB))
    data = b"".join(out)
    if sink is not None:
        sink.write(data)
    return data


# -- reader -----------------------------------------------------------------

def _records(data: bytes):
    pos = 0
    n = len(data)
    while pos < n:
        if pos + 4 > n:
            raise GdsParseError("truncated record header", pos)
        length, rtype = struct.unpack_from(">HH", data, pos)
        if length < 4 or length % 2:
            raise GdsParseError(f"bad record length {length}", pos)
        if pos + length > n:
            raise GdsParseError(f"record {_NAMES.get(rtype, hex(rtype))} truncated", pos)
        yield pos, rtype, data[pos + 4 : pos + length]
        pos += length


def _string(payload: bytes) -> str:
    return payload.rstrip(b"\x00").decode("ascii")


def _int16(payload: bytes, offset: int) -> int:
    if len(payload) < 2:
        raise GdsParseError("short integer record", offset)
    return struct.unpack_from(">h", payload)[0]


def _round_units(x: float) -> float:
    return float(f"{x:.15g}")


def read_gds(data: bytes) -> GdsLibrary:
    """Parse a stream produced by :func:`write_gds` (or any boundary-only file)."""
    lib: GdsLibrary | None = None
    cell: GdsCell | None = None
    element = None  # dict for the open BOUNDARY, "skip" for unsupported elements
    ended = False
    for offset, rtype, payload in _records(data):
        if ended:
            raise GdsParseError("data after ENDLIB", offset)
        if element == "skip":
            if rtype == ENDEL:
                element = None
            continue
        if rtype == HEADER:
            continue
        if rtype == BGNLIB:
            lib = GdsLibrary(name="")
        elif lib is None:
            raise GdsParseError(f"{_NAMES.get(rtype, hex(rtype))} before BGNLIB", offset)
        elif rtype == LIBNAME:
            lib.name = _string(payload)
        elif rtype == UNITS:
            if len(payload) != 16:
                raise GdsParseError("UNITS record must hold two reals", offset)
            db_in_user = decode_real8(payload[:8])
            db_in_m = decode_real8(payload[8:])
            lib.unit_in_meters = db_in_m
            lib.user_unit = _round_units(db_in_m / db_in_user)
        elif rtype == BGNSTR:
            cell = GdsCell(name="")
        elif rtype == STRNAME:
            if cell is None:
                raise GdsParseError("STRNAME outside a structure", offset)
            cell.name = _string(payload)
        elif rtype == ENDSTR:
            if cell is None:
                raise GdsParseError("ENDSTR without BGNSTR", offset)
            lib.cells.append(cell)
            cell = None
        elif rtype == BOUNDARY:
            if cell is None:
                raise GdsParseError("BOUNDARY outside a structure", offset)
            element = {"layer": None, "datatype": 0, "xy": None, "offset": offset}
        elif rtype in _ELEMENT_STARTS:
            warnings.warn(
                f"skipping unsupported {_NAMES[rtype]} element at byte offset {offset}",
                stacklevel=2,
            )
            element = "skip"
        elif rtype == LAYER and element is not None:
            element["layer"] = _int16(payload, offset)
        elif rtype == DATATYPE and element is not None:
            element["datatype"] = _int16(payload, offset)
        elif rtype == XY and element is not None:
            if len(payload) % 8:
                raise GdsParseError("XY payload not a whole number of points", offset)
            flat = struct.unpack(f">{len(payload) // 4}i", payload)
            element["xy"] = tuple(zip(flat[0::2], flat[1::2]))
        elif rtype == ENDEL and element is not None:
            if element["layer"] is None or element["xy"] is None:
                raise GdsParseError("BOUNDARY without LAYER or XY", element["offset"])
            try:
                cell.boundaries.append(
                    Boundary(element["layer"], element["datatype"], element["xy"])
                )
            except InvalidInputError as exc:
                raise GdsParseError(str(exc), element["offset"]) from None
            element = None
        elif rtype == ENDLIB:
            ended = True
        else:
            warnings.warn(
                f"skipping unknown record 0x{rtype:04X} at byte offset {offset}",
                stacklevel=2,
            )
    if not ended:
        raise GdsParseError("missing ENDLIB", len(data))
    return lib


def plan_to_library(plan, name: str = "AIRBRIDGE", cell_name: str = "TOP") -> GdsLibrary:
    """One cell with every plan polygon as a boundary on its layer number."""
    cell = GdsCell(cell_name)
    for layer, poly in plan.polygons():
        cell.boundaries.append(Boundary.from_polygon(layer.number, poly.vertices))
    return GdsLibrary(name=name, cells=[cell], unit_in_meters=1e-9, user_unit=1e-6)
