"""On-disk formats: RF frames, dB sidecars, PGM images and CSV reports.

RF and ``.dbmap`` files share one layout: a single line of JSON terminated
by ``\\n``, followed by raw little-endian float32 samples. RF data are stored
channel-major (all samples of element 0 first); dB maps are stored
scanline-major.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence, Tuple

import numpy as np

from .core import BeamformedImage, RfChannelFrame, ScanGeometry
from .errors import InvalidArgument

_F32 = np.dtype("<f4")


def _write_header_blob(path, header: dict, data: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    with open(path, "wb") as fh:
        fh.write(line)
        fh.write(np.ascontiguousarray(data, dtype=_F32).tobytes())
    return path


def _read_header_blob(path) -> Tuple[dict, np.ndarray]:
    raw = Path(path).read_bytes()
    cut = raw.find(b"\n")
    if cut < 0:
        raise InvalidArgument(f"{path}: missing header line")
    try:
        header = json.loads(raw[:cut])
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"{path}: malformed header: {exc}") from None
    data = np.frombuffer(raw[cut + 1 :], dtype=_F32)
    return header, data


def write_rf(path, frame: RfChannelFrame, geometry: ScanGeometry | None = None) -> Path:
    header = {
        "kind": "rf",
        "fs": frame.fs,
        "t0": frame.t0,
        "polarity": frame.polarity,
        "scanline_index": frame.scanline_index,
        "n_channels": frame.n_channels,
        "n_samples": frame.n_samples,
    }
    if geometry is not None:
        header["geometry"] = geometry.to_dict()
    return _write_header_blob(path, header, frame.data)


def read_rf(path) -> Tuple[RfChannelFrame, dict]:
    """Load an RF file; samples come back as float64."""
    header, data = _read_header_blob(path)
    if header.get("kind") != "rf":
        raise InvalidArgument(f"{path}: not an RF file")
    shape = (header["n_channels"], header["n_samples"])
    if data.size != shape[0] * shape[1]:
        raise InvalidArgument(f"{path}: expected {shape[0] * shape[1]} samples, found {data.size}")
    frame = RfChannelFrame(
        data=data.reshape(shape).astype(float),
        fs=header["fs"],
        t0=header["t0"],
        polarity=header["polarity"],
        scanline_index=header["scanline_index"],
    )
    return frame, header


def write_dbmap(path, image: BeamformedImage) -> Path:
    header = {
        "kind": "dbmap",
        "n_scanlines": image.shape[0],
        "n_depths": image.shape[1],
        "lateral": image.lateral.tolist(),
        "depth": image.depth.tolist(),
        "guard": image.guard,
        "dynamic_range_db": image.dynamic_range_db,
    }
    return _write_header_blob(path, header, image.db_unclamped)


def read_dbmap(path) -> BeamformedImage:
    """Rebuild an image (amplitude relative to peak) from a dB sidecar."""
    header, data = _read_header_blob(path)
    if header.get("kind") != "dbmap":
        raise InvalidArgument(f"{path}: not a dB map")
    shape = (header["n_scanlines"], header["n_depths"])
    if data.size != shape[0] * shape[1]:
        raise InvalidArgument(f"{path}: size does not match the header")
    db = data.reshape(shape).astype(float)
    return BeamformedImage(
        values=10.0 ** (db / 20.0),
        lateral=np.asarray(header["lateral"]),
        depth=np.asarray(header["depth"]),
        dynamic_range_db=header["dynamic_range_db"],
        guard=header["guard"],
    )


def render_image(image: BeamformedImage, dynamic_range_db: float | None = None) -> bytes:
    """8-bit binary PGM: depth down the rows, scanlines across the columns."""
    if image.values.size == 0:
        raise InvalidArgument("cannot render an empty image")
    dr = image.dynamic_range_db if dynamic_range_db is None else float(dynamic_range_db)
    if not (dr > 0 and math.isfinite(dr)):
        raise InvalidArgument("dynamic range must be positive")
    level = np.floor(255.0 * (image.db_unclamped + dr) / dr + 0.5)
    pixels = np.clip(level, 0, 255).astype(np.uint8).T
    rows, cols = pixels.shape
    return f"P5\n{cols} {rows}\n255\n".encode() + pixels.tobytes()


def write_bytes(path, blob: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    return path


def format_float(value: float) -> str:
    """Shortest repr that round-trips; NaN written as ``nan``."""
    return "nan" if math.isnan(value) else repr(float(value))


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, float) else v for v in row])
    return write_bytes(path, buf.getvalue().encode("utf-8"))


def read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj) -> Path:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    return write_bytes(path, text.encode("utf-8"))


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"{path}: invalid JSON: {exc}") from None
