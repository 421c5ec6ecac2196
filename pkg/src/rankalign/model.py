"""Parametric distance head over precomputed feature-difference statistics.

The distance between a target image and a candidate is a non-negative linear
combination of per-layer, per-channel squared normalized feature differences
that were spatially averaged upstream.  Only the combination weights are ever
trained; everything here is immutable and safe to share across threads.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from rankalign.errors import FormatError, SchemaMismatchError, ValidationError

WEIGHT_FORMAT_VERSION = 1


def _frozen_f32(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32).reshape(-1)
    arr.flags.writeable = False
    return arr


def _frozen_f64(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LayerSchema:
    """Ordered (layer name, channel count) pairs describing the feature taps."""

    layers: tuple[tuple[str, int], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "layers", tuple((str(n), int(c)) for n, c in self.layers))
        if not self.layers:
            raise ValidationError("schema needs at least one layer")
        names = [n for n, _ in self.layers]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate layer names in schema: {names}")
        for name, channels in self.layers:
            if not name:
                raise ValidationError("layer names must be non-empty")
            if channels < 1:
                raise ValidationError(
                    f"layer {name!r} must have at least one channel, got {channels}")

    @property
    def layer_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.layers)

    @property
    def channel_counts(self) -> tuple[int, ...]:
        return tuple(c for _, c in self.layers)

    @property
    def total_channels(self) -> int:
        """Total trainable parameter count."""
        return sum(self.channel_counts)

    def slices(self) -> tuple[slice, ...]:
        """Per-layer slices into the flattened parameter vector."""
        out = []
        start = 0
        for _, c in self.layers:
            out.append(slice(start, start + c))
            start += c
        return tuple(out)


def _check_conforms(schema: LayerSchema, parts: tuple[np.ndarray, ...], what: str):
    if len(parts) != len(schema.layers):
        raise SchemaMismatchError(
            f"{what} has {len(parts)} layers, schema expects {len(schema.layers)}")
    for (name, channels), arr in zip(schema.layers, parts):
        if arr.shape != (channels,):
            raise SchemaMismatchError(
                f"{what} layer {name!r} has {arr.shape[0]} channels, "
                f"schema expects {channels}")


@dataclass(frozen=True)
class DistanceTensor:
    """Spatially averaged squared feature differences for one (set, image) pair.

    ``values`` holds one non-negative float32 vector per layer, in schema
    order.  Stored as float32 to match the binary interchange format exactly.
    """

    set_id: str
    image_id: str
    values: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "values", tuple(_frozen_f32(v) for v in self.values))
        for i, arr in enumerate(self.values):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(
                    f"tensor ({self.set_id!r}, {self.image_id!r}) layer index {i} "
                    f"contains non-finite values")
            if np.any(arr < 0):
                raise ValidationError(
                    f"tensor ({self.set_id!r}, {self.image_id!r}) layer index {i} "
                    f"contains negative values")

    def flat(self) -> np.ndarray:
        """All values concatenated in layer order, as float64."""
        return np.concatenate([v.astype(np.float64) for v in self.values])


@dataclass(frozen=True)
class WeightHead:
    """The trainable non-negative per-layer, per-channel combination weights."""

    schema: LayerSchema
    weights: tuple[np.ndarray, ...] = field(compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "weights", tuple(_frozen_f64(w) for w in self.weights))
        _check_conforms(self.schema, self.weights, "weight head")
        for (name, _), arr in zip(self.schema.layers, self.weights):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"layer {name!r} has non-finite weights")
            if np.any(arr < 0):
                raise ValidationError(f"layer {name!r} has negative weights")

    def __eq__(self, other):
        if not isinstance(other, WeightHead):
            return NotImplemented
        return self.schema == other.schema and all(
            np.array_equal(a, b) for a, b in zip(self.weights, other.weights))

    @property
    def flat(self) -> np.ndarray:
        """Weights concatenated in layer order (read-only float64)."""
        out = np.concatenate(self.weights)
        out.flags.writeable = False
        return out

    @classmethod
    def from_flat(cls, schema: LayerSchema, vec) -> "WeightHead":
        vec = np.asarray(vec, dtype=np.float64).reshape(-1)
        if vec.shape[0] != schema.total_channels:
            raise SchemaMismatchError(
                f"flat vector has {vec.shape[0]} entries, schema expects "
                f"{schema.total_channels}")
        return cls(schema, tuple(vec[s] for s in schema.slices()))

    @classmethod
    def ones(cls, schema: LayerSchema) -> "WeightHead":
        return cls(schema, tuple(np.ones(c) for c in schema.channel_counts))


def distance(head: WeightHead, tensor: DistanceTensor) -> float:
    """Weighted sum of the tensor values: sum_l sum_ch w[l][ch] * t[l][ch]."""
    _check_conforms(head.schema, tensor.values, "distance tensor")
    return float(sum(np.dot(w, v) for w, v in zip(head.weights, tensor.values)))


def distance_gradient(head: WeightHead, tensor: DistanceTensor) -> np.ndarray:
    """Gradient of ``distance`` w.r.t. the flattened weights (= the tensor values)."""
    _check_conforms(head.schema, tensor.values, "distance tensor")
    return tensor.flat()


def save_weights(head: WeightHead, path) -> None:
    """Write the weight document; floats keep full round-trip precision."""
    doc = {
        "format_version": WEIGHT_FORMAT_VERSION,
        "layers": [
            {"name": name, "channel_count": channels, "weights": arr.tolist()}
            for (name, channels), arr in zip(head.schema.layers, head.weights)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_weights(path) -> WeightHead:
    """Parse a weight document, rejecting malformed or negative entries."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid weight document: {exc}", path=path,
                          line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise FormatError("weight document must be an object", path=path)
    if doc.get("format_version") != WEIGHT_FORMAT_VERSION:
        raise FormatError(
            f"unsupported weight format_version {doc.get('format_version')!r}",
            path=path)
    layers = doc.get("layers")
    if not isinstance(layers, list) or not layers:
        raise FormatError("weight document needs a non-empty 'layers' list",
                          path=path)
    schema_entries = []
    weight_parts = []
    for entry in layers:
        if not isinstance(entry, dict):
            raise FormatError("each layer entry must be an object", path=path)
        try:
            name = entry["name"]
            channels = entry["channel_count"]
            weights = entry["weights"]
        except KeyError as exc:
            raise FormatError(f"layer entry missing key {exc}", path=path) from exc
        if not isinstance(weights, list) or len(weights) != channels:
            raise FormatError(
                f"layer {name!r}: expected {channels} weights, got "
                f"{len(weights) if isinstance(weights, list) else type(weights).__name__}",
                path=path)
        for w in weights:
            if not isinstance(w, (int, float)) or not math.isfinite(w):
                raise FormatError(f"layer {name!r}: non-numeric weight {w!r}",
                                  path=path)
            if w < 0:
                raise FormatError(f"layer {name!r}: negative weight {w}", path=path)
        schema_entries.append((name, channels))
        weight_parts.append(np.asarray(weights, dtype=np.float64))
    try:
        schema = LayerSchema(tuple(schema_entries))
        return WeightHead(schema, tuple(weight_parts))
    except (ValidationError, SchemaMismatchError) as exc:
        raise FormatError(str(exc), path=path) from exc


def _reject_constant(token):
    raise FormatError(f"non-finite constant {token!r} not allowed in weight files")
