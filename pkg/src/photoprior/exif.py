"""Read the four ordinal EXIF tags from JPEG/TIFF byte streams.

Only the tags used for pairwise ranking are extracted: FNumber,
ExposureTime, FocalLength and ISOSpeedRatings. Everything else in the
container (MakerNote, GPS, thumbnails, ...) is skipped without decoding.
The parser is read-only and never writes EXIF.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Optional

from .errors import MalformedContainer, OffsetOutOfBounds

TAG_EXPOSURE_TIME = 0x829A  # RATIONAL, seconds
TAG_F_NUMBER = 0x829D       # RATIONAL, dimensionless F-stop
TAG_ISO_SPEED = 0x8827      # SHORT, arithmetic ISO
TAG_FOCAL_LENGTH = 0x920A   # RATIONAL, millimeters
TAG_EXIF_SUBIFD = 0x8769    # LONG, pointer to the Exif sub-IFD

TYPE_SHORT = 3
TYPE_LONG = 4
TYPE_RATIONAL = 5

_TYPE_SIZES = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 6: 1, 7: 1, 8: 2, 9: 4, 10: 8}


@dataclass(frozen=True)
class ExifRecord:
    """The four ordinal tag values of one image; any subset may be absent."""

    aperture_f_number: Optional[float] = None
    exposure_time_s: Optional[float] = None
    focal_length_mm: Optional[float] = None
    iso_speed: Optional[int] = None

    def tag(self, i: int):
        """Value of the i-th ranking tag, i in 1..4; None if absent."""
        return (self.aperture_f_number, self.exposure_time_s,
                self.focal_length_mm, self.iso_speed)[i - 1]

    def present_count(self) -> int:
        return sum(v is not None for v in
                   (self.aperture_f_number, self.exposure_time_s,
                    self.focal_length_mm, self.iso_speed))


@dataclass(frozen=True)
class TiffContext:
    """Byte order + IFD0 offset resolved from a TIFF header."""

    byte_order: str  # '<' little-endian, '>' big-endian
    ifd0_offset: int
    raw: bytes


def _read(buf: bytes, offset: int, size: int) -> bytes:
    if offset < 0 or offset + size > len(buf):
        raise OffsetOutOfBounds(
            f"read of {size} bytes at offset {offset} exceeds buffer "
            f"({len(buf)} bytes)")
    return buf[offset:offset + size]


def _u16(buf: bytes, offset: int, order: str) -> int:
    return struct.unpack(order + "H", _read(buf, offset, 2))[0]


def _u32(buf: bytes, offset: int, order: str) -> int:
    return struct.unpack(order + "I", _read(buf, offset, 4))[0]


def _tiff_context(buf: bytes) -> TiffContext:
    marker = _read(buf, 0, 2)
    if marker == b"II":
        order = "<"
    elif marker == b"MM":
        order = ">"
    else:
        raise MalformedContainer(f"bad TIFF byte-order marker {marker!r}")
    if _u16(buf, 2, order) != 42:
        raise MalformedContainer("TIFF magic 42 missing")
    ifd0 = _u32(buf, 4, order)
    return TiffContext(byte_order=order, ifd0_offset=ifd0, raw=buf)


def _entry_values(ctx: TiffContext, type_id: int, count: int,
                  value_field_offset: int):
    """Raw integer payload of one IFD entry (inline or via offset).

    Returns a list of ints for SHORT/LONG, a list of (num, den) pairs for
    RATIONAL, or None for types we do not decode.
    """
    size = _TYPE_SIZES.get(type_id)
    if size is None or count == 0:
        return None
    total = size * count
    if total <= 4:
        data_offset = value_field_offset
    else:
        data_offset = _u32(ctx.raw, value_field_offset, ctx.byte_order)
    data = _read(ctx.raw, data_offset, total)
    order = ctx.byte_order
    if type_id == TYPE_SHORT:
        return list(struct.unpack(f"{order}{count}H", data))
    if type_id == TYPE_LONG:
        return list(struct.unpack(f"{order}{count}I", data))
    if type_id == TYPE_RATIONAL:
        raw = struct.unpack(f"{order}{2 * count}I", data)
        return [(raw[2 * i], raw[2 * i + 1]) for i in range(count)]
    return None


def _walk_ifd(ctx: TiffContext, offset: int, wanted: set) -> dict:
    """Collect raw payloads of the wanted tags from one IFD."""
    n = _u16(ctx.raw, offset, ctx.byte_order)
    found = {}
    for k in range(n):
        entry = offset + 2 + 12 * k
        # Entry layout: tag u16, type u16, count u32, value-or-offset u32.
        tag = _u16(ctx.raw, entry, ctx.byte_order)
        if tag not in wanted:
            continue
        type_id = _u16(ctx.raw, entry + 2, ctx.byte_order)
        count = _u32(ctx.raw, entry + 4, ctx.byte_order)
        values = _entry_values(ctx, type_id, count, entry + 8)
        if values is not None:
            found[tag] = (type_id, values)
    return found


def _positive_rational(payload) -> Optional[float]:
    type_id, values = payload
    if type_id != TYPE_RATIONAL or not values:
        return None
    num, den = values[0]
    if den == 0:  # cameras do emit 0/0; drop rather than guess
        return None
    value = num / den
    return value if value > 0 else None


def _positive_short(payload) -> Optional[int]:
    type_id, values = payload
    if type_id not in (TYPE_SHORT, TYPE_LONG) or not values:
        return None
    value = int(values[0])  # count > 1: first value, common camera convention
    return value if value > 0 else None


def _record_from_tiff(buf: bytes) -> ExifRecord:
    ctx = _tiff_context(buf)
    wanted = {TAG_F_NUMBER, TAG_EXPOSURE_TIME, TAG_FOCAL_LENGTH,
              TAG_ISO_SPEED, TAG_EXIF_SUBIFD}
    tags = _walk_ifd(ctx, ctx.ifd0_offset, wanted)
    pointer = tags.pop(TAG_EXIF_SUBIFD, None)
    if pointer is not None:
        type_id, values = pointer
        if type_id == TYPE_LONG and values:
            sub = _walk_ifd(ctx, values[0], wanted)
            sub.pop(TAG_EXIF_SUBIFD, None)
            tags.update(sub)  # sub-IFD is the canonical photography IFD
    return ExifRecord(
        aperture_f_number=_positive_rational(tags[TAG_F_NUMBER])
        if TAG_F_NUMBER in tags else None,
        exposure_time_s=_positive_rational(tags[TAG_EXPOSURE_TIME])
        if TAG_EXPOSURE_TIME in tags else None,
        focal_length_mm=_positive_rational(tags[TAG_FOCAL_LENGTH])
        if TAG_FOCAL_LENGTH in tags else None,
        iso_speed=_positive_short(tags[TAG_ISO_SPEED])
        if TAG_ISO_SPEED in tags else None,
    )


def _exif_payload_from_jpeg(buf: bytes) -> Optional[bytes]:
    """TIFF blob inside the first APP1 "Exif" segment, or None."""
    pos = 2
    while pos + 2 <= len(buf):
        if buf[pos] != 0xFF:
            raise MalformedContainer(f"expected marker at offset {pos}")
        marker = buf[pos + 1]
        if marker == 0xFF:  # fill byte
            pos += 1
            continue
        if marker in (0xD8, 0x01) or 0xD0 <= marker <= 0xD7:
            pos += 2
            continue
        if marker in (0xD9, 0xDA):  # EOI / SOS: no EXIF ahead of the scan
            return None
        length = _u16(buf, pos + 2, ">")
        if length < 2 or pos + 2 + length > len(buf):
            raise MalformedContainer(f"truncated segment at offset {pos}")
        if marker == 0xE1 and buf[pos + 4:pos + 10] == b"Exif\x00\x00":
            return buf[pos + 10:pos + 2 + length]
        pos += 2 + length
    return None


def parse_exif(buf: bytes) -> ExifRecord:
    """Extract the four ranking tags from a JPEG or bare TIFF byte stream.

    Missing tags are not errors: the result may have any subset of fields.
    Raises MalformedContainer/OffsetOutOfBounds for structural damage.
    """
    if len(buf) >= 2 and buf[:2] == b"\xff\xd8":
        payload = _exif_payload_from_jpeg(bytes(buf))
        if payload is None:
            return ExifRecord()
        return _record_from_tiff(payload)
    if len(buf) >= 2 and buf[:2] in (b"II", b"MM"):
        return _record_from_tiff(bytes(buf))
    raise MalformedContainer("neither JPEG SOI nor TIFF byte-order marker")


def record_to_json_dict(path: str, record: ExifRecord) -> dict:
    return {
        "path": path,
        "aperture": record.aperture_f_number,
        "exposure_time": record.exposure_time_s,
        "focal_length": record.focal_length_mm,
        "iso": record.iso_speed,
    }


def emit_records(paths, out) -> int:
    """Write one JSON line per input path to the text stream `out`.

    Per-file failures become ``{"path": ..., "error": ...}`` lines and do
    not abort the batch. Returns the number of files parsed successfully.
    """
    ok = 0
    for path in paths:
        try:
            with open(path, "rb") as fh:
                record = parse_exif(fh.read())
        except (MalformedContainer, OSError) as exc:
            obj = {"path": str(path), "error": str(exc)}
        else:
            obj = record_to_json_dict(str(path), record)
            ok += 1
        out.write(json.dumps(obj) + "\n")
    return ok
