"""File I/O for images (binary PPM), landmark sidecars and dataset manifests."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import MalformedContainer
from .exif import ExifRecord, parse_exif


def write_ppm(path, image: np.ndarray) -> None:
    """Write an H x W x 3 uint8 array as binary PPM (P6, maxval 255)."""
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError("expected H x W x 3 uint8 image")
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM (P6) file into an H x W x 3 uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P6":
        raise MalformedContainer(f"{path}: not a P6 PPM")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":  # comment to end of line
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise MalformedContainer(f"{path}: bad PPM header") from exc
    if maxval != 255:
        raise MalformedContainer(f"{path}: only maxval 255 supported")
    n = h * w * 3
    body = data[pos:pos + n]
    if len(body) != n:
        raise MalformedContainer(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy()


def write_landmarks(path, points: np.ndarray) -> None:
    """Write 68 landmark points as one "x y" line each."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape != (68, 2):
        raise ValueError("expected 68 x 2 landmark array")
    with open(path, "w") as fh:
        for x, y in points:
            fh.write(f"{x!r} {y!r}\n")


def read_landmarks(path) -> np.ndarray:
    points = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            x, y = line.split()
            points.append((float(x), float(y)))
    arr = np.array(points, dtype=np.float64)
    if arr.shape != (68, 2):
        raise MalformedContainer(f"{path}: expected 68 landmarks, got {len(points)}")
    return arr


@dataclass
class ManifestEntry:
    """One dataset sample: image path plus optional sidecar data."""

    image_path: str
    landmark_path: Optional[str] = None
    exif: ExifRecord = ExifRecord()
    label: Optional[int] = None  # ground truth for evaluation sets


def _record_from_dict(d: dict) -> ExifRecord:
    return ExifRecord(
        aperture_f_number=d.get("aperture"),
        exposure_time_s=d.get("exposure_time"),
        focal_length_mm=d.get("focal_length"),
        iso_speed=d.get("iso"),
    )


def record_to_manifest_dict(record: ExifRecord) -> dict:
    out = {}
    if record.aperture_f_number is not None:
        out["aperture"] = record.aperture_f_number
    if record.exposure_time_s is not None:
        out["exposure_time"] = record.exposure_time_s
    if record.focal_length_mm is not None:
        out["focal_length"] = record.focal_length_mm
    if record.iso_speed is not None:
        out["iso"] = record.iso_speed
    return out


def read_manifest(path) -> list:
    """Read a JSONL dataset manifest.

    Each line: {"image_path": ..., "landmark_path"?: ..., "exif"?: {...},
    "label"?: 0|1}. When "exif" is absent the image bytes are parsed for
    EXIF; formats without EXIF support (e.g. PPM) yield an empty record.
    """
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            image_path = resolve(obj["image_path"])
            if "exif" in obj:
                record = _record_from_dict(obj["exif"])
            else:
                try:
                    with open(image_path, "rb") as img:
                        record = parse_exif(img.read())
                except (MalformedContainer, OSError):
                    record = ExifRecord()
            landmark_path = obj.get("landmark_path")
            entries.append(ManifestEntry(
                image_path=image_path,
                landmark_path=resolve(landmark_path) if landmark_path else None,
                exif=record,
                label=obj.get("label"),
            ))
    return entries


def write_manifest(path, rows) -> None:
    """Write manifest rows (dicts) as JSONL."""
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
