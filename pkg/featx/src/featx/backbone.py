"""AlexNet backbone with activation taps after each convolutional ReLU."""

import hashlib
from dataclasses import dataclass

import torch
from torchvision.models import AlexNet_Weights, alexnet

from featx.errors import BackboneError

# indices into alexnet().features; one tap after each of the five ReLUs
TAPS = (("conv1", 1), ("conv2", 4), ("conv3", 7), ("conv4", 9), ("conv5", 11))


@dataclass(frozen=True)
class Backbone:
    features: torch.nn.Module
    weights_digest: str

    @property
    def layer_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in TAPS)

    @property
    def channel_counts(self) -> tuple[int, ...]:
        counts = []
        for _, idx in TAPS:
            conv = self.features[idx - 1]
            counts.append(conv.out_channels)
        return tuple(counts)

    def activations(self, batch: torch.Tensor) -> list[torch.Tensor]:
        """Run a (N,3,H,W) batch; returns the five tapped activations."""
        taps = dict(TAPS)
        wanted = set(taps.values())
        out: dict[int, torch.Tensor] = {}
        x = batch
        with torch.no_grad():
            for idx, module in enumerate(self.features):
                x = module(x)
                if idx in wanted:
                    out[idx] = x
                if len(out) == len(wanted):
                    break
        return [out[idx] for _, idx in TAPS]


def _file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def load_backbone(weights_path=None) -> Backbone:
    """Build the tapped backbone.

    With a path, loads a full-model state dict from disk and pins its
    SHA-256. Without one, resolves the torchvision pretrained weights;
    raises BackboneError when they are unavailable (e.g. offline).
    """
    if weights_path is None:
        try:
            model = alexnet(weights=AlexNet_Weights.IMAGENET1K_V1)
        except Exception as exc:
            raise BackboneError(
                "pretrained backbone weights are not resolvable; pass an "
                "explicit state-dict path") from exc
        digest = f"torchvision:{AlexNet_Weights.IMAGENET1K_V1.url}"
    else:
        model = alexnet(weights=None)
        try:
            state = torch.load(weights_path, map_location="cpu",
                               weights_only=True)
            model.load_state_dict(state)
        except OSError:
            raise
        except Exception as exc:
            raise BackboneError(
                f"state dict at {weights_path} does not fit the "
                f"backbone: {exc}") from exc
        digest = f"sha256:{_file_digest(weights_path)}"
    features = model.features.eval()
    for p in features.parameters():
        p.requires_grad_(False)
    return Backbone(features=features, weights_digest=digest)
