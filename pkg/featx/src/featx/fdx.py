"""Writer for the FDX distance-archive interchange format.

Layout (little-endian): magic ``FDX1``; u32 layer count; per layer a
u16-length UTF-8 name and u32 channel count; u64 record count; then
records sorted ascending by (set_id, image_id), each a u16-length set
id, u16-length image id, and one f32 per channel in schema order.
Values must be finite and non-negative.
"""

import json
import struct

import numpy as np

from featx.errors import ManifestError

MAGIC = b"FDX1"


def _packed_string(text: str, what: str) -> bytes:
    raw = text.encode("utf-8")
    if not raw:
        raise ManifestError(f"{what} must be non-empty")
    if len(raw) > 0xFFFF:
        raise ManifestError(f"{what} exceeds 65535 bytes: {text[:40]!r}...")
    return struct.pack("<H", len(raw)) + raw


def write_archive(path, layers, records) -> int:
    """Write (set_id, image_id, per-layer value arrays) records.

    `layers` is a sequence of (name, channel_count); `records` may arrive
    in any order and are serialized in canonical (set_id, image_id) order.
    Returns the record count.
    """
    layers = [(str(n), int(c)) for n, c in layers]
    if not layers:
        raise ManifestError("archive needs at least one layer")
    names = [n for n, _ in layers]
    if len(set(names)) != len(names):
        raise ManifestError(f"duplicate layer names in {names}")
    for name, count in layers:
        if count < 1:
            raise ManifestError(f"layer {name!r} has channel count {count}")

    ordered = sorted(records, key=lambda r: (r[0], r[1]))
    seen = set()
    buf = bytearray(MAGIC)
    buf += struct.pack("<I", len(layers))
    for name, count in layers:
        buf += _packed_string(name, "layer name")
        buf += struct.pack("<I", count)
    buf += struct.pack("<Q", len(ordered))
    for set_id, image_id, values in ordered:
        key = (set_id, image_id)
        if key in seen:
            raise ManifestError(f"duplicate record key {key!r}")
        seen.add(key)
        if len(values) != len(layers):
            raise ManifestError(
                f"record {key!r} has {len(values)} layers, schema has "
                f"{len(layers)}")
        buf += _packed_string(set_id, "set id")
        buf += _packed_string(image_id, "image id")
        for (name, count), part in zip(layers, values):
            arr = np.asarray(part, dtype=np.float32)
            if arr.shape != (count,):
                raise ManifestError(
                    f"record {key!r} layer {name!r} has shape {arr.shape}, "
                    f"expected ({count},)")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ManifestError(
                    f"record {key!r} layer {name!r} has non-finite or "
                    "negative values")
            buf += arr.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(buf)
    return len(ordered)


def write_weight_head(path, layers, weight_arrays) -> None:
    """Write combination weights in the interchange JSON layout."""
    doc = {"format_version": 1, "layers": []}
    for (name, count), arr in zip(layers, weight_arrays):
        vec = np.asarray(arr, dtype=np.float64)
        if vec.shape != (count,):
            raise ManifestError(
                f"weights for layer {name!r} have shape {vec.shape}, "
                f"expected ({count},)")
        if not np.all(np.isfinite(vec)) or np.any(vec < 0):
            raise ManifestError(
                f"weights for layer {name!r} must be finite and >= 0")
        doc["layers"].append({"name": name, "channel_count": count,
                              "weights": vec.tolist()})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
