"""Binary archive for feature-difference tensors.

Layout (all integers little-endian):

    magic   4 bytes         b"FDX1"
    u32     layer count L
    L x     u16 name length, UTF-8 name bytes, u32 channel count
    u64     record count R
    R x     u16 set id length, set id bytes (UTF-8)
            u16 image id length, image id bytes (UTF-8)
            per layer: channel count x f32 values

Records are sorted by (set_id, image_id) lexicographically on the raw
strings.  Values are stored exactly as float32, so a write/read round trip
is bit-identical.  All read errors report the byte offset at which parsing
failed.
"""

import struct
from collections.abc import Iterable

import numpy as np

from rankalign.errors import FormatError, ValidationError
from rankalign.model import DistanceTensor, LayerSchema

MAGIC = b"FDX1"

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class _Cursor:
    """Byte reader that raises FormatError with the failing offset."""

    def __init__(self, data: bytes, path=None):
        self.data = data
        self.pos = 0
        self.path = path

    def fail(self, message: str, offset=None):
        raise FormatError(message, path=self.path,
                          offset=self.pos if offset is None else offset)

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            self.fail(f"truncated archive: needed {n} bytes for {what}, "
                      f"only {len(self.data) - self.pos} left")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u16(self, what: str) -> int:
        return _U16.unpack(self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return _U64.unpack(self.take(8, what))[0]

    def string(self, what: str) -> str:
        start = self.pos
        n = self.u16(f"{what} length")
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            self.fail(f"{what} is not valid UTF-8: {exc}", offset=start + 2)


def _encode_string(s: str, what: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValidationError(f"{what} {s[:32]!r}... exceeds 65535 bytes")
    return _U16.pack(len(raw)) + raw


def write_archive(path, schema: LayerSchema,
                  tensors: Iterable[DistanceTensor]) -> int:
    """Write tensors (sorted by key) to ``path``; returns the record count.

    Duplicate (set_id, image_id) keys and schema mismatches are rejected
    before any bytes are written.
    """
    records = sorted(tensors, key=lambda t: (t.set_id, t.image_id))
    seen = set()
    for t in records:
        key = (t.set_id, t.image_id)
        if key in seen:
            raise ValidationError(f"duplicate tensor key {key!r}")
        seen.add(key)
        if tuple(v.shape[0] for v in t.values) != schema.channel_counts:
            raise ValidationError(
                f"tensor {key!r} does not conform to the archive schema")

    header = [MAGIC, _U32.pack(len(schema.layers))]
    for name, channels in schema.layers:
        header.append(_encode_string(name, "layer name"))
        header.append(_U32.pack(channels))
    header.append(_U64.pack(len(records)))

    with open(path, "wb") as fh:
        fh.write(b"".join(header))
        for t in records:
            fh.write(_encode_string(t.set_id, "set id"))
            fh.write(_encode_string(t.image_id, "image id"))
            for arr in t.values:
                fh.write(arr.astype("<f4", copy=False).tobytes())
    return len(records)


def read_archive(path) -> tuple[LayerSchema, list[DistanceTensor]]:
    """Read an archive; validates magic, ordering, duplicates, and values."""
    with open(path, "rb") as fh:
        data = fh.read()
    cur = _Cursor(data, path=path)

    magic = cur.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}",
                          path=path, offset=0)
    layer_count = cur.u32("layer count")
    if layer_count == 0:
        cur.fail("archive declares zero layers", offset=4)
    entries = []
    for _ in range(layer_count):
        name = cur.string("layer name")
        channels = cur.u32(f"channel count for layer {name!r}")
        if channels == 0:
            cur.fail(f"layer {name!r} declares zero channels",
                     offset=cur.pos - 4)
        entries.append((name, channels))
    try:
        schema = LayerSchema(tuple(entries))
    except ValidationError as exc:
        raise FormatError(str(exc), path=path, offset=8) from exc

    record_count = cur.u64("record count")
    tensors = []
    prev_key = None
    for i in range(record_count):
        record_start = cur.pos
        set_id = cur.string("set id")
        image_id = cur.string("image id")
        key = (set_id, image_id)
        if prev_key is not None:
            if key == prev_key:
                raise FormatError(f"duplicate record key {key!r}",
                                  path=path, offset=record_start)
            if key < prev_key:
                raise FormatError(
                    f"record key {key!r} out of order after {prev_key!r}",
                    path=path, offset=record_start)
        prev_key = key
        values = []
        for name, channels in schema.layers:
            value_start = cur.pos
            raw = cur.take(4 * channels, f"values for layer {name!r}")
            arr = np.frombuffer(raw, dtype="<f4").astype(np.float32)
            if not np.all(np.isfinite(arr)):
                bad = int(np.flatnonzero(~np.isfinite(arr))[0])
                raise FormatError(
                    f"record {key!r} layer {name!r} channel {bad} is non-finite",
                    path=path, offset=value_start + 4 * bad)
            if np.any(arr < 0):
                bad = int(np.flatnonzero(arr < 0)[0])
                raise FormatError(
                    f"record {key!r} layer {name!r} channel {bad} is negative "
                    f"({arr[bad]})", path=path, offset=value_start + 4 * bad)
            values.append(arr)
        tensors.append(DistanceTensor(set_id, image_id, tuple(values)))

    if cur.pos != len(data):
        raise FormatError(
            f"{len(data) - cur.pos} trailing bytes after the last record",
            path=path, offset=cur.pos)
    return schema, tensors


def index_archive(tensors: list[DistanceTensor]) -> dict[tuple[str, str], DistanceTensor]:
    """Key tensors by (set_id, image_id) for lookup during training."""
    return {(t.set_id, t.image_id): t for t in tensors}
