"""Per-pair feature distances: preprocess, tap, normalize, diff, average.

For each manifest row the output record holds, per tapped layer, the
spatial mean over (h, w) of the squared difference between the
channel-unit-normalized activations of the image and of its target.
Preprocessing follows the reference perceptual-metric convention:
square resize, scale to [-1, 1], then the fixed per-channel shift/scale.
"""

from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from featx import fdx
from featx.backbone import Backbone
from featx.errors import BackboneError, ImageDecodeError
from featx.manifest import PairRow

# reference scaling-layer constants applied after mapping [0,1] -> [-1,1]
CHANNEL_SHIFT = (-0.030, -0.088, -0.188)
CHANNEL_SCALE = (0.458, 0.448, 0.450)
NORM_EPS = 1e-10


@dataclass(frozen=True)
class PreprocessSpec:
    resize_edge: int = 64
    center_crop: int | None = None

    def __post_init__(self):
        if self.resize_edge < 16:
            raise ValueError(f"resize edge too small: {self.resize_edge}")
        if self.center_crop is not None and self.center_crop < 16:
            raise ValueError(f"center crop too small: {self.center_crop}")

    def to_dict(self) -> dict:
        return {
            "resize_edge": self.resize_edge,
            "center_crop": self.center_crop,
            "value_range": "[-1, 1]",
            "channel_shift": list(CHANNEL_SHIFT),
            "channel_scale": list(CHANNEL_SCALE),
        }


def load_image(path, spec: PreprocessSpec) -> torch.Tensor:
    """Decode, resize, and scale one image to a (3, e, e) tensor."""
    try:
        with Image.open(path) as img:
            img.load()
            img = img.convert("RGB")
    except (UnidentifiedImageError, SyntaxError, ValueError) as exc:
        raise ImageDecodeError(f"cannot decode image {path}: {exc}") from exc
    if spec.center_crop is not None:
        w, h = img.size
        edge = min(spec.center_crop, w, h)
        left = (w - edge) // 2
        top = (h - edge) // 2
        img = img.crop((left, top, left + edge, top + edge))
    img = img.resize((spec.resize_edge, spec.resize_edge), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    x = torch.from_numpy(arr).permute(2, 0, 1)
    x = x * 2.0 - 1.0
    shift = torch.tensor(CHANNEL_SHIFT, dtype=torch.float32).view(3, 1, 1)
    scale = torch.tensor(CHANNEL_SCALE, dtype=torch.float32).view(3, 1, 1)
    return (x - shift) / scale


def unit_normalize(act: torch.Tensor) -> torch.Tensor:
    """Scale each spatial position's channel vector to unit length."""
    norm = torch.sqrt(torch.sum(act * act, dim=0, keepdim=True))
    return act / (norm + NORM_EPS)


def pair_values(acts_a, acts_b) -> list[np.ndarray]:
    """Per-layer per-channel spatial means of squared normalized diffs."""
    out = []
    for a, b in zip(acts_a, acts_b):
        diff = unit_normalize(a) - unit_normalize(b)
        out.append((diff * diff).mean(dim=(1, 2)).numpy().astype(np.float32))
    return out


def activations_for_paths(backbone: Backbone, spec: PreprocessSpec, paths,
                          batch_size: int = 16) -> dict:
    """Tapped activations per unique path, batched in first-seen order."""
    unique = list(dict.fromkeys(paths))
    out: dict[str, list[torch.Tensor]] = {}
    for start in range(0, len(unique), batch_size):
        chunk = unique[start:start + batch_size]
        batch = torch.stack([load_image(p, spec) for p in chunk])
        taps = backbone.activations(batch)
        for layer in taps:
            if not torch.all(torch.isfinite(layer)):
                raise BackboneError("backbone produced non-finite activations")
        for i, path in enumerate(chunk):
            out[path] = [layer[i] for layer in taps]
    return out


def extract_records(backbone: Backbone, rows: list[PairRow],
                    spec: PreprocessSpec, batch_size: int = 16) -> list:
    """(set_id, image_id, values) per manifest row, in manifest order."""
    paths = []
    for row in rows:
        paths.append(row.target_path)
        paths.append(row.image_path)
    acts = activations_for_paths(backbone, spec, paths, batch_size)
    return [
        (row.set_id, row.image_id,
         pair_values(acts[row.target_path], acts[row.image_path]))
        for row in rows
    ]


def write_records(path, backbone: Backbone, records) -> int:
    layers = list(zip(backbone.layer_names, backbone.channel_counts))
    return fdx.write_archive(path, layers, records)


def convert_linear_checkpoint(path, backbone: Backbone) -> list[np.ndarray]:
    """Reshape the reference metric's 1x1-conv linear weights per layer.

    Expects keys lin{i}.model.1.weight of shape (1, C_i, 1, 1). The
    published weights are non-negative; negative float dust is clamped.
    """
    state = torch.load(path, map_location="cpu", weights_only=True)
    arrays = []
    for i, (name, count) in enumerate(zip(backbone.layer_names,
                                          backbone.channel_counts)):
        key = f"lin{i}.model.1.weight"
        if key not in state:
            raise BackboneError(
                f"linear checkpoint {path} is missing {key!r}")
        w = state[key].detach().to(torch.float64).numpy().reshape(-1)
        if w.shape[0] != count:
            raise BackboneError(
                f"linear weights for {name} have {w.shape[0]} channels, "
                f"backbone tap has {count}")
        arrays.append(np.clip(w, 0.0, None))
    return arrays
