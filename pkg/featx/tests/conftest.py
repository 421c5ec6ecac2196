import numpy as np
import pytest

from helpers_featx import CHANNELS, write_manifest  # noqa: F401

# torch, torchvision, PIL and featx are imported inside the fixtures so
# this conftest stays importable when the extractor is not built; the
# test modules skip themselves via importorskip in that case.


@pytest.fixture(scope="session")
def backbone_file(tmp_path_factory):
    """A seeded full-model state dict standing in for pinned weights."""
    import torch
    from torchvision.models import alexnet

    path = tmp_path_factory.mktemp("weights") / "backbone.pth"
    torch.manual_seed(1234)
    torch.save(alexnet(weights=None).state_dict(), str(path))
    return str(path)


@pytest.fixture(scope="session")
def backbone(backbone_file):
    from featx.backbone import load_backbone

    return load_backbone(backbone_file)


@pytest.fixture(scope="session")
def linear_file(tmp_path_factory):
    """Synthetic checkpoint in the reference metric's lin-layer layout."""
    import torch

    path = tmp_path_factory.mktemp("weights") / "linear.pth"
    gen = torch.Generator().manual_seed(5)
    state = {
        f"lin{i}.model.1.weight": torch.rand((1, c, 1, 1), generator=gen) * 0.1
        for i, c in enumerate(CHANNELS)
    }
    torch.save(state, str(path))
    return str(path)


def _write_image(rng, path, kind):
    from PIL import Image

    if kind == "noise":
        arr = rng.integers(0, 256, size=(48, 48, 3), dtype=np.uint8)
    else:
        ramp = np.linspace(0, 255, 48)
        gx, gy = np.meshgrid(ramp, ramp[::-1])
        base = np.stack([gx, gy, np.full((48, 48), 128.0)], axis=-1)
        arr = np.clip(base + rng.normal(0, 25, size=(48, 48, 3)),
                      0, 255).astype(np.uint8)
    Image.fromarray(arr, "RGB").save(path)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """10 sets x (1 target + 5 candidates): 50 pairs, 60 images."""
    root = tmp_path_factory.mktemp("corpus")
    rng = np.random.default_rng(77)
    rows = []
    for si in range(10):
        target = root / f"t{si:02d}.png"
        _write_image(rng, str(target), "noise" if si % 2 else "ramp")
        for j in range(5):
            img = root / f"s{si:02d}_i{j}.png"
            _write_image(rng, str(img), "noise" if j % 2 else "ramp")
            rows.append((f"s{si:02d}", str(target), f"i{j}", str(img)))
    return {"root": root, "rows": rows}


@pytest.fixture(scope="session")
def manifest_file(corpus):
    return write_manifest(corpus["root"] / "pairs.csv", corpus["rows"])
